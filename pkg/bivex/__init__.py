"""bivex: large-deviation rates and sharp tail asymptotics for component-wise
maxima of bivariate Gaussian samples, with exact and Monte Carlo oracles."""

__version__ = "0.1.0"
