"""
Utilities Package

This package contains logging, configuration, seeding and file I/O helpers.
"""
