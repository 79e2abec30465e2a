"""
Business Logic Package

This package contains the modelling code: network statistics, the THERGM
generator, TERGM estimation, the stage-one clustering models and the
evaluation routines.
"""
