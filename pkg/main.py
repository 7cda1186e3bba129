import sys

from src.viseme_toolkit.cli import main

if __name__ == "__main__":
    sys.exit(main())
