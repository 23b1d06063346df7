"""
Models Package

Pydantic models for game, novelty and experiment configuration and for metrics
records. All data models are defined in schemas.py.
"""
