"""
Models Package

This package contains the data models: networks, memberships, model
configuration, results and error types.
"""
