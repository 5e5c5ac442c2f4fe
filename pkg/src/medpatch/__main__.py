"""
Entry point for running medpatch as a module: python -m medpatch
"""

from medpatch.cli import main

if __name__ == "__main__":
    main()
