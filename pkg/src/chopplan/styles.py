"""Enumeration and validation of chopstick gripping styles.

A style is an N-tuple assigning each finger (thumb first) to the upper stick
(1), the lower stick (2) or no contact (0).
"""

from __future__ import annotations

from itertools import product

GripStyle = tuple[int, ...]

# Conventional names for the five styles shown with the standard hand.
STYLE_NAMES = {
    (1, 1, 1, 2, 0): "standard",
    (1, 1, 1, 1, 2): "forsaken pinky",
    (1, 1, 2, 0, 0): "right-hand rule",
    (1, 0, 1, 2, 0): "dino claws",
    (1, 0, 0, 1, 2): "unnamed",
}


def is_valid_style(style) -> tuple[bool, str | None]:
    """Validity check plus the first violated rule, if any.

    Rules, in order: the thumb holds the upper stick; the nonzero
    assignments of the remaining fingers must not cross (all stick-1
    fingers precede all stick-2 fingers in thumb-to-pinky order); and each
    stick needs support from at least one non-thumb finger.
    """
    style = tuple(int(c) for c in style)
    if any(c not in (0, 1, 2) for c in style):
        raise ValueError("style entries must be 0, 1 or 2")
    if len(style) < 2:
        raise ValueError("style needs at least two fingers")
    if style[0] != 1:
        return False, "thumb must hold the upper stick"
    rest = [c for c in style[1:] if c != 0]
    if any(a == 2 and b == 1 for a, b in zip(rest, rest[1:])):
        return False, "finger crossing"
    if 1 not in rest:
        return False, "no non-thumb finger supports the upper stick"
    if 2 not in rest:
        return False, "no finger supports the lower stick"
    return True, None


def enumerate_valid_styles(finger_count: int = 5) -> list[GripStyle]:
    """All valid styles for a hand with `finger_count` fingers, in
    lexicographic order."""
    if finger_count < 2:
        raise ValueError("need at least two fingers")
    out = []
    for rest in product((0, 1, 2), repeat=finger_count - 1):
        style = (1,) + rest
        if is_valid_style(style)[0]:
            out.append(style)
    return out


def style_name(style) -> str | None:
    return STYLE_NAMES.get(tuple(style))


def contacting_fingers(style) -> list[tuple[int, int]]:
    """(finger index, stick index) pairs for the contacting fingers."""
    return [(i, c) for i, c in enumerate(style) if c != 0]


def parse_style(text: str) -> GripStyle:
    """Parse '1,1,1,2,0' or '11120' into a style tuple."""
    text = text.strip()
    parts = text.split(",") if "," in text else list(text)
    style = tuple(int(p) for p in parts)
    ok, reason = is_valid_style(style)
    if not ok:
        raise ValueError(f"invalid gripping style {style}: {reason}")
    return style
