"""quantfolio: statistical risk models, convex diversification strategies,
and rolling crisis-window backtests."""

__version__ = "0.1.0"
