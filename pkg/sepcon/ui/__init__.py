"""UI components — console output."""

from sepcon.ui.console import ConsoleUI

__all__ = ["ConsoleUI"]
