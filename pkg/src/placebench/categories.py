"""Category vocabulary shared by the simulator, predictors and pipeline."""

from __future__ import annotations

TARGET_CATEGORIES = (
    "Potted Plant",
    "Lamp",
    "Cushion",
    "Vase",
    "Trash Can",
    "Toaster",
    "Table Lamp",
    "Alarm Clock",
    "Laptop",
)

STRUCTURE_CATEGORIES = ("Floor", "Wall")

RECEPTACLE_CATEGORIES = (
    "Couch",
    "Sofa",
    "Bed",
    "Armchair",
    "Bench",
    "Coffee Table",
    "Table",
    "Desk",
    "Chest of Drawers",
    "Shelf",
    "Kitchen Counter",
    "Bedside Table",
    "Nightstand",
    "End Table",
)

# label 0 is free space
LABELS = ("empty",) + STRUCTURE_CATEGORIES + RECEPTACLE_CATEGORIES + TARGET_CATEGORIES
LABEL_ID = {name: i for i, name in enumerate(LABELS)}

# Table strings that name the same receptacle class as a simulator label.
_ALIASES = {
    "shelve": "shelf",
    "shelves": "shelf",
    "plotted plant": "potted plant",
}


def normalize(name: str) -> str:
    key = " ".join(name.strip().lower().split())
    return _ALIASES.get(key, key)


_CANON = {normalize(n): n for n in LABELS[1:]}


def canonical(name: str) -> str | None:
    """Simulator label for a free-form category string, or None if unknown."""
    return _CANON.get(normalize(name))


def label_id(name: str) -> int:
    c = canonical(name)
    if c is None:
        raise KeyError(f"unknown category {name!r}")
    return LABEL_ID[c]


# object footprints in meters (x extent, y extent); either orientation may be used
FOOTPRINTS = {
    "Potted Plant": (0.30, 0.30),
    "Lamp": (0.40, 0.40),
    "Cushion": (0.45, 0.45),
    "Vase": (0.20, 0.20),
    "Trash Can": (0.35, 0.35),
    "Toaster": (0.30, 0.20),
    "Table Lamp": (0.25, 0.25),
    "Alarm Clock": (0.15, 0.10),
    "Laptop": (0.35, 0.25),
}

# object heights in meters, for scene generation
OBJECT_HEIGHTS = {
    "Potted Plant": 0.40,
    "Lamp": 1.50,
    "Cushion": 0.15,
    "Vase": 0.30,
    "Trash Can": 0.40,
    "Toaster": 0.20,
    "Table Lamp": 0.45,
    "Alarm Clock": 0.10,
    "Laptop": 0.05,
}


def _palette() -> dict[int, tuple[int, int, int]]:
    out = {0: (0, 0, 0), LABEL_ID["Floor"]: (150, 130, 110), LABEL_ID["Wall"]: (210, 210, 200)}
    for i in range(3, len(LABELS)):
        # deterministic, well-separated flat colors
        h = (i * 0.61803398875) % 1.0
        r = int(80 + 170 * abs((h * 6) % 2 - 1))
        g = int(80 + 170 * abs(((h + 1 / 3) * 6) % 2 - 1))
        b = int(80 + 170 * abs(((h + 2 / 3) * 6) % 2 - 1))
        out[i] = (r, g, b)
    return out


PALETTE = _palette()
