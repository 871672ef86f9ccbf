"""Limit-order-book market simulation with heterogeneous traders, and the
statistics used to study its price and order-flow regularities."""
from .agents import ConfigurationError, RootFindingError
from .config import ExperimentConfig, parse_config
from .lob import Book, Order, Side, Trade
from .market import EventLog, Market, ModelParams, run
from .runner import analyze, execute, sweep
from .stats import HillEstimator, ModifiedRescaledRange, VolatilityAutocorrelation

__version__ = "0.1.0"

__all__ = [
    "Book", "ConfigurationError", "EventLog", "ExperimentConfig", "HillEstimator", "Market",
    "ModelParams", "ModifiedRescaledRange", "Order", "RootFindingError", "Side", "Trade",
    "VolatilityAutocorrelation", "analyze", "execute", "parse_config", "run", "sweep",
]
