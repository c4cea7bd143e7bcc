"""Built-in problem instances."""

# Groundwater-flow instance on the unit ball of R^3: radially varying
# exponents, a source localised in B(0, 1/2) and a Gaussian singular weight.
SECTION4 = {
    "dim": 3,
    "box": (-1.0, 1.0),
    "domain": "chi_ball(0,0,0,1)",
    "exponents": {
        "p": "2+absx/3",
        "q": "2.5+absx/3",
        "r": "3+absx/3",
        "s": "4.8+sin(3.141592653589793*absx*absx)",
        "beta": "0.5+0.4*absx",
        "alpha": "absx*absx+1",
        "gamma": "absx*absx+1",
        "mu1": "1/(1+absx)",
        "mu2": "1/(2+absx)",
        "m1": "chi_ball(0,0,0,0.5)",
        "m2": "exp(-absx*absx)",
    },
}

# nominal extrema over the closed ball, for comparison with grid values
SECTION4_BOUNDS = {
    "p_min": 2.0, "p_max": 2.0 + 1 / 3,
    "q_min": 2.5, "q_max": 2.5 + 1 / 3,
    "r_min": 3.0, "r_max": 3.0 + 1 / 3,
    "s_min": 4.8, "s_max": 5.8,
    "beta_min": 0.5, "beta_max": 0.9,
}

# Lipschitz constants in |x| of the exponents above on [0, 1]
SECTION4_LIPSCHITZ = {
    "p": 1 / 3, "q": 1 / 3, "r": 1 / 3, "s": 2 * 3.141592653589793, "beta": 0.4,
}

PRESETS = {"section4": SECTION4}


def preset_exponent_set(n: int = 33, name: str = "section4"):
    from .grid import build_grid
    from .spaces import ExponentSet

    entry = PRESETS[name]
    grid = build_grid(entry["dim"], n, entry["box"], entry["domain"])
    return ExponentSet.from_expressions(grid, entry["exponents"])
