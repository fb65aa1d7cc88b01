"""Published results for the built-in problems: (value, evaluated pairs, max open list size).

Only the values are checked by `bench --compare-paper`; the counts are shown for comparison.
"""

PUBLISHED = {
    ("tiger-a", "mdp", 2): (-4.00, 252, 8),
    ("tiger-a", "mdp", 3): (5.19, 105_228, 248),
    ("tiger-a", "mdp", 4): (4.80, 944_512_102, 19_752),
    ("tiger-b", "mdp", 2): (20.00, 171, 8),
    ("tiger-b", "mdp", 3): (30.00, 26_496, 168),
    ("tiger-b", "mdp", 4): (40.00, 344_426_508, 26_488),
    ("channel", "mdp", 2): (2.00, 9, 3),
    ("channel", "mdp", 3): (2.99, 1_044, 10),
    ("channel", "mdp", 4): (3.89, 33_556_500, 1_038),
    ("tiger-a", "recursive", 2): (-4.00, 252, 8),
    ("tiger-a", "recursive", 3): (5.19, 105_066, 88),
    ("tiger-a", "recursive", 4): (4.80, 879_601_444, 18_020),
    ("tiger-b", "recursive", 2): (20.00, 171, 8),
    ("tiger-b", "recursive", 3): (30.00, 26_415, 158),
    ("tiger-b", "recursive", 4): (40.00, 344_400_183, 25_102),
    ("channel", "recursive", 2): (2.00, 9, 3),
    ("channel", "recursive", 3): (2.99, 263, 6),
    ("channel", "recursive", 4): (3.89, 16_778_260, 461),
}

VALUE_TOLERANCE = 0.01


def lookup(problem: str, heuristic: str, horizon: int):
    return PUBLISHED.get((problem, heuristic, horizon))
