"""Console UI — colored output, tables, and JSON pretty-printing."""

import json
import re
import sys
from typing import Any, Dict, Sequence

from colorama import Fore, Style, init

from sepcon.utils import fmt

init(autoreset=True, strip=False)

# Color shortcuts
C = Fore.CYAN
G = Fore.GREEN
Y = Fore.YELLOW
R = Fore.RED
M = Fore.MAGENTA
DIM = Style.DIM
BRIGHT = Style.BRIGHT
RESET = Style.RESET_ALL


def print_json_colored(data: Any, indent: int = 2) -> None:
    """Pretty print JSON with syntax highlighting."""
    text = json.dumps(data, indent=indent, ensure_ascii=False)
    for line in text.split("\n"):
        highlighted = line
        highlighted = re.sub(r'(".*?"): ', rf"{C}\1{RESET}: ", highlighted)
        highlighted = re.sub(r': (".*?")([,]?)', rf": {G}\1{RESET}\2", highlighted)
        highlighted = re.sub(r": ([-\d.e]+)([,]?)", rf": {Y}\1{RESET}\2", highlighted)
        highlighted = re.sub(
            r": (true|false|null)([,]?)", rf": {M}\1{RESET}\2", highlighted
        )
        print(highlighted)


class ConsoleUI:
    """Console output helpers for CLI."""

    @staticmethod
    def banner(version: str) -> None:
        """Display startup banner."""
        print(f"\n{BRIGHT}{C}  sepcon v{version}{RESET}")
        print(f"{DIM}  Separated control of paired model/actual systems{RESET}\n")

    @staticmethod
    def heading(title: str) -> None:
        """Highlight a section heading."""
        print(f"{BRIGHT}{M}{title}{RESET}")

    @staticmethod
    def label(title: str) -> None:
        """Label a following block of text."""
        print(f"{Y}{BRIGHT}{title}:{RESET}")

    @staticmethod
    def table(columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> None:
        """Aligned table; numbers go through the CSV formatter."""
        cells = [[_text(row.get(c)) for c in columns] for row in rows]
        widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)]
        header = "  ".join(c.ljust(w) for c, w in zip(columns, widths))
        print(f"{BRIGHT}{header}{RESET}")
        print(f"{DIM}{'-' * len(header)}{RESET}")
        for r in cells:
            print("  ".join(v.ljust(w) for v, w in zip(r, widths)))

    @staticmethod
    def success(msg: str) -> None:
        print(f"{G}{BRIGHT}[OK]{RESET} {msg}")

    @staticmethod
    def warn(msg: str) -> None:
        print(f"{Y}{BRIGHT}[!!]{RESET} {msg}")

    @staticmethod
    def error(msg: str) -> None:
        print(f"{R}{BRIGHT}Error{RESET} {msg}")

    @staticmethod
    def failure_line(kind: str, msg: str) -> None:
        """Single machine-parsable line on stderr: error[<kind>]: <message>."""
        print(f"error[{kind}]: {msg}", file=sys.stderr)

    @staticmethod
    def dim(msg: str) -> None:
        print(f"{DIM}{msg}{RESET}")


def _text(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, (list, tuple)):
        return " ".join(_text(v) for v in value)
    return fmt(value)
