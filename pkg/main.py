#!/usr/bin/env python3
"""
THERGM Toolkit - Main Entry Point

This is the main entry point for the command-line toolkit. It makes the
``src`` package importable and hands the arguments to the application.
"""

import sys
from pathlib import Path

# Add the application directory to the Python path
app_dir = Path(__file__).parent
sys.path.insert(0, str(app_dir))

from src.application import ThergmApp


def main():
    """Main entry point for the application."""
    sys.exit(ThergmApp().run(sys.argv[1:]))


if __name__ == "__main__":
    main()
