#!/usr/bin/env python3
"""Convenience launcher for the sepcon CLI."""

from sepcon.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
