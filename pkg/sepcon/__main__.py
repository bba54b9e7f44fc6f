"""Allow running as python -m sepcon."""

from sepcon.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
