"""
Controllers Package

This package contains the pipeline controller that connects the command
line to the business logic and the output files.
"""
