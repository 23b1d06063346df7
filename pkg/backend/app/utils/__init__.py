"""
Utilities Package

Logging configuration and the exception hierarchy shared by every service.
"""
