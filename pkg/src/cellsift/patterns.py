"""Run-length generalization of cell values over character classes.

Three granularities:
  level 1: alphanumeric runs become ``A[len]``, every other character is kept
           literally (one char at a time, no run folding);
  level 2: letter/digit/symbol runs become ``L[len]``/``D[len]``/``S[len]``;
  level 3: like level 2 but letters split into upper ``U`` and lower ``u``.

``"DOe123."`` generalizes to ``A[6].``, ``L[3]D[3]S[1]``, ``U[2]u[1]D[3]S[1]``.
Equal values always share a pattern, and a pattern string decodes back to a
unique (class, run-length) sequence: class letters never occur literally at
level 1 because literals are non-alphanumeric by construction.
"""

from __future__ import annotations

LEVELS = (1, 2, 3)


def _char_class(ch: str, level: int) -> str:
    if level == 1:
        return "A" if ch.isalnum() else ch
    if ch.isalpha():
        if level == 2:
            return "L"
        return "U" if ch.isupper() else "u"
    if ch.isdigit():
        return "D"
    return "S"


def generalize_pattern(value: str, level: int) -> str:
    """Collapse `value` into its class/run-length pattern at the given level."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level}")
    out: list[str] = []
    run_class: str | None = None
    run_len = 0

    def flush() -> None:
        if run_class is None:
            return
        if level == 1 and run_class != "A":
            # literal characters are emitted one by one, never run-folded
            out.append(run_class * run_len)
        else:
            out.append(f"{run_class}[{run_len}]")

    for ch in value:
        cls = _char_class(ch, level)
        if cls == run_class:
            run_len += 1
        else:
            flush()
            run_class, run_len = cls, 1
    flush()
    return "".join(out)


def all_patterns(value: str) -> tuple[str, str, str]:
    return tuple(generalize_pattern(value, lv) for lv in LEVELS)  # type: ignore[return-value]


def pattern_regex(pattern: str, level: int) -> str:
    """Translate a level-2/3 pattern back into an anchored-regex character form.

    Used to turn observed column formats into checkable expressions, e.g.
    ``U[2]D[3]`` -> ``[A-Z]{2}[0-9]{3}``.
    """
    classes = {
        "L": "[A-Za-z]",
        "U": "[A-Z]",
        "u": "[a-z]",
        "D": "[0-9]",
        "S": "[^A-Za-z0-9]",
    }
    out: list[str] = []
    i = 0
    while i < len(pattern):
        cls = pattern[i]
        if cls not in classes or i + 1 >= len(pattern) or pattern[i + 1] != "[":
            raise ValueError(f"not a level-{level} pattern: {pattern!r}")
        end = pattern.index("]", i)
        count = int(pattern[i + 2 : end])
        out.append(f"{classes[cls]}{{{count}}}")
        i = end + 1
    return "".join(out)
