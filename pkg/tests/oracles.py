"""Reference implementations written independently of the package code."""


def cox_de_boor(t, i, p, x):
    """Scalar textbook recursion for the i-th B-spline of order p on knots t."""
    if p == 0:
        return 1.0 if t[i] <= x < t[i + 1] else 0.0
    a = 0.0 if t[i + p] == t[i] else (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x)
    b = (0.0 if t[i + p + 1] == t[i + 1]
         else (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x))
    return a + b
