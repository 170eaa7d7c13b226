"""Skill- and cost-driven task outsourcing: cost model, decision engine, market simulator."""

__version__ = "0.1.0"
