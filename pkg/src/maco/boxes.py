"""Axis-aligned box annotations and pixel-membership helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Box:
    """Pixel-space box: rows [y, y+height), columns [x, x+width)."""

    x: int
    y: int
    width: int
    height: int
    label: str = ""
    phrase: str = ""

    def validate(self, map_h: int, map_w: int) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ParameterError(f"box extents must be positive, got {self.width}x{self.height}")
        if self.x < 0 or self.y < 0 or self.x + self.width > map_w or self.y + self.height > map_h:
            raise ParameterError(
                f"box ({self.x},{self.y},{self.width},{self.height}) outside {map_h}x{map_w} map"
            )

    def to_dict(self) -> dict:
        return {
            "x": self.x, "y": self.y, "width": self.width, "height": self.height,
            "label": self.label, "phrase": self.phrase,
        }

    @staticmethod
    def from_dict(d: dict) -> "Box":
        return Box(
            x=int(d["x"]), y=int(d["y"]), width=int(d["width"]), height=int(d["height"]),
            label=str(d.get("label", "")), phrase=str(d.get("phrase", "")),
        )


def boxes_mask(shape: tuple[int, int], boxes: list[Box]) -> np.ndarray:
    """Boolean union-of-boxes membership mask."""
    mask = np.zeros(shape, dtype=bool)
    for b in boxes:
        b.validate(*shape)
        mask[b.y : b.y + b.height, b.x : b.x + b.width] = True
    return mask
