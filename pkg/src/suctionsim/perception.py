"""Top-down blood masks, pool detection, scene annotation, and the mask sensor."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .config import PerceptionConfig
from .errors import ConfigError, PlanExhausted
from .fluid import SimState
from .tissue import HeightMap

EIGHT_CONN = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class BinaryMask:
    grid: np.ndarray  # bool (rows, cols)
    extent: tuple[tuple[float, float], tuple[float, float]]

    @property
    def resolution(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def cell_size(self) -> tuple[float, float]:
        (x0, x1), (y0, y1) = self.extent
        rows, cols = self.grid.shape
        return (y1 - y0) / rows, (x1 - x0) / cols

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Grid cell containing workspace point (clipped to the grid)."""
        (x0, x1), (y0, y1) = self.extent
        rows, cols = self.grid.shape
        c = int(np.clip((x - x0) / (x1 - x0) * cols, 0, cols - 1))
        r = int(np.clip((y - y0) / (y1 - y0) * rows, 0, rows - 1))
        return r, c

    def cell_centers(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        (x0, x1), (y0, y1) = self.extent
        nr, nc = self.grid.shape
        x = x0 + (cols + 0.5) / nc * (x1 - x0)
        y = y0 + (rows + 0.5) / nr * (y1 - y0)
        return np.column_stack([x, y])


@dataclass(frozen=True)
class PoolObservation:
    label: str
    grid: np.ndarray  # bool, same shape as scene mask
    area: int
    centroid: tuple[float, float]  # meters
    bbox: tuple[int, int, int, int]  # (row0, col0, row1, col1) inclusive
    bleeding: bool = False
    clot: bool = False
    tool_adjacent: bool = False


def rasterize_mask(state: SimState, resolution: tuple[int, int] | None = None) -> BinaryMask:
    """Orthographic top-down projection of active particles onto the grid."""
    perception = PerceptionConfig()
    rows, cols = resolution or (perception.mask_rows, perception.mask_cols)
    if rows < 16 or cols < 16:
        raise ConfigError("mask resolution must be at least 16x16")
    extent = state.surface.extent
    (x0, x1), (y0, y1) = extent
    grid = np.zeros((rows, cols), dtype=bool)
    idx = np.flatnonzero(state.active)
    if idx.size:
        c = np.clip(((state.pos[idx, 0] - x0) / (x1 - x0) * cols).astype(int), 0, cols - 1)
        r = np.clip(((state.pos[idx, 1] - y0) / (y1 - y0) * rows).astype(int), 0, rows - 1)
        grid[r, c] = True
    return BinaryMask(grid, extent)


def _segment_cells(mask: BinaryMask, p0, p1, radius: float) -> np.ndarray:
    """Cells whose centers lie within `radius` of the 2D segment p0-p1."""
    rows, cols = mask.grid.shape
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    centers = mask.cell_centers(rr.ravel(), cc.ravel())
    a = np.asarray(p0, dtype=float)
    b = np.asarray(p1, dtype=float)
    ab = b - a
    ab2 = float(ab @ ab)
    if ab2 > 0:
        t = np.clip((centers - a) @ ab / ab2, 0.0, 1.0)
    else:
        t = np.zeros(len(centers))
    d = np.linalg.norm(centers - (a + t[:, None] * ab), axis=1)
    return (d <= radius).reshape(rows, cols)


def pool_components(grid: np.ndarray, min_cells: int = 1) -> list[np.ndarray]:
    """8-connected components of a boolean grid with at least `min_cells` cells."""
    labeled, ncomp = ndimage.label(grid, structure=EIGHT_CONN)
    out = []
    for k in range(1, ncomp + 1):
        comp = labeled == k
        if int(comp.sum()) >= min_cells:
            out.append(comp)
    return out


def detect_pools(
    mask: BinaryMask,
    state: SimState,
    previous: list[PoolObservation] | None = None,
    assigned_count: int | None = None,
    config: PerceptionConfig | None = None,
) -> list[PoolObservation]:
    """8-connected pool detection with spray filtering and flag attribution.

    With `previous`, labels are re-associated by maximal mask overlap so a
    pool keeps its name while it shrinks; fresh components get new labels.
    """
    cfg = config or PerceptionConfig()
    comps = []
    for grid in pool_components(mask.grid, cfg.min_pool_cells):
        area = int(grid.sum())
        rr, cc = np.nonzero(grid)
        cen = mask.cell_centers(rr, cc).mean(axis=0)
        comps.append(
            {
                "grid": grid,
                "area": area,
                "centroid": (float(cen[0]), float(cen[1])),
                "bbox": (int(rr.min()), int(cc.min()), int(rr.max()), int(cc.max())),
            }
        )
    if not comps:
        return []

    # flag attribution against the component mask dilated by a couple cells
    emitter_cells = [
        mask.cell_of(em.source[0], em.source[1])
        for em in state.emitters
        if em.active_at(state.step_index)
    ]
    clot_foot = None
    if state.clots:
        clot_foot = np.zeros(mask.grid.shape, dtype=bool)
        for clot in state.clots:
            p0, p1, radius = clot.footprint_2d()
            clot_foot |= _segment_cells(mask, p0, p1, radius)
    tool_cell = None
    if state.distractor_pos is not None:
        tool_cell = mask.cell_of(state.distractor_pos[0], state.distractor_pos[1])

    for comp in comps:
        dil = ndimage.binary_dilation(comp["grid"], EIGHT_CONN, iterations=cfg.flag_dilation_cells)
        comp["bleeding"] = any(dil[r, c] for r, c in emitter_cells)
        comp["clot"] = bool((dil & clot_foot).any()) if clot_foot is not None else False
        if tool_cell is not None:
            near = ndimage.binary_dilation(comp["grid"], EIGHT_CONN, iterations=cfg.tool_adjacency_cells)
            comp["tool_adjacent"] = bool(near[tool_cell[0], tool_cell[1]])
        else:
            comp["tool_adjacent"] = False

    # label assignment
    labels: list[str | None] = [None] * len(comps)
    if previous:
        taken = set()
        overlaps = []
        for ci, comp in enumerate(comps):
            for prev in previous:
                ov = int((comp["grid"] & prev.grid).sum())
                if ov > 0:
                    overlaps.append((ov, ci, prev.label))
        overlaps.sort(key=lambda t: (-t[0], t[1], t[2]))
        for ov, ci, lbl in overlaps:
            if labels[ci] is None and lbl not in taken:
                labels[ci] = lbl
                taken.add(lbl)
        next_index = (assigned_count or len(previous)) + 1
    else:
        next_index = (assigned_count or 0) + 1

    fresh = [ci for ci in range(len(comps)) if labels[ci] is None]
    fresh.sort(key=lambda ci: (comps[ci]["centroid"][0], comps[ci]["centroid"][1]))
    for ci in fresh:
        labels[ci] = f"P{next_index}"
        next_index += 1

    pools = [
        PoolObservation(
            label=labels[ci],
            grid=comp["grid"],
            area=comp["area"],
            centroid=comp["centroid"],
            bbox=comp["bbox"],
            bleeding=comp["bleeding"],
            clot=comp["clot"],
            tool_adjacent=comp["tool_adjacent"],
        )
        for ci, comp in enumerate(comps)
    ]
    pools.sort(key=lambda p: int(p.label[1:]))
    return pools


class PoolTracker:
    """Keeps pool identities stable across steps via overlap re-association."""

    #: how many updates a vanished pool's footprint stays eligible for
    #: re-association (a refilling bleeding site keeps its old label)
    MEMORY_UPDATES = 50

    def __init__(self, config: PerceptionConfig | None = None):
        self.config = config or PerceptionConfig()
        self.pools: list[PoolObservation] = []
        self.assigned = 0
        self._memory: dict[str, tuple[PoolObservation, int]] = {}

    def update(self, mask: BinaryMask, state: SimState) -> list[PoolObservation]:
        remembered = [obs for obs, _ in self._memory.values()]
        prev = (self.pools + remembered) or None
        pools = detect_pools(mask, state, previous=prev, assigned_count=self.assigned, config=self.config)
        self.assigned = max([self.assigned] + [int(p.label[1:]) for p in pools])
        live = {p.label for p in pools}
        for stale in [lbl for lbl in self._memory if lbl in live]:
            del self._memory[stale]
        for old in self.pools:
            if old.label not in live and old.label not in self._memory:
                self._memory[old.label] = (old, 0)
        self._memory = {
            lbl: (obs, age + 1)
            for lbl, (obs, age) in self._memory.items()
            if age + 1 <= self.MEMORY_UPDATES
        }
        self.pools = pools
        return pools


@dataclass(frozen=True)
class AnnotatedImage:
    png_bytes: bytes
    sidecar: dict

    def save(self, path: str | Path) -> None:
        p = Path(path)
        p.write_bytes(self.png_bytes)
        p.with_suffix(".json").write_text(json.dumps(self.sidecar, indent=2, sort_keys=True) + "\n")


def annotate_scene(
    state: SimState,
    pools: list[PoolObservation],
    heightmap: HeightMap | None = None,
    scale: int = 4,
) -> AnnotatedImage:
    """Deterministic top-down rendering with labeled bounding boxes.

    A machine-readable sidecar carries the labels, boxes, and flags so
    nothing downstream ever needs to parse pixels.
    """
    if not pools:
        raise ConfigError("annotate_scene needs at least one pool")
    mask = rasterize_mask(state)
    rows, cols = mask.grid.shape

    img = np.zeros((rows, cols, 3), dtype=np.uint8)
    if heightmap is not None and heightmap.resolution == (rows, cols):
        h = heightmap.heights
        shade = ((h - h.min()) / max(float(np.ptp(h)), 1e-9) * 80 + 120).astype(np.uint8)
    else:
        shade = np.full((rows, cols), 160, dtype=np.uint8)
    img[:, :, 0] = shade
    img[:, :, 1] = (shade * 0.75).astype(np.uint8)
    img[:, :, 2] = (shade * 0.70).astype(np.uint8)
    img[mask.grid] = (170, 10, 10)
    if state.clots:
        foot = np.zeros((rows, cols), dtype=bool)
        for clot in state.clots:
            p0, p1, radius = clot.footprint_2d()
            foot |= _segment_cells(mask, p0, p1, radius)
        img[foot] = (90, 30, 30)
    if state.distractor_pos is not None:
        r, c = mask.cell_of(state.distractor_pos[0], state.distractor_pos[1])
        img[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2] = (200, 200, 220)

    pil = Image.fromarray(img[::-1]).resize((cols * scale, rows * scale), Image.NEAREST)
    draw = ImageDraw.Draw(pil)
    for pool in pools:
        r0, c0, r1, c1 = pool.bbox
        # vertical flip: row r maps to drawn row rows-1-r
        y0 = (rows - 1 - r1) * scale
        y1 = (rows - r0) * scale - 1
        x0 = c0 * scale
        x1 = (c1 + 1) * scale - 1
        draw.rectangle([x0, y0, x1, y1], outline=(255, 255, 0), width=1)
        draw.text((x0 + 2, max(y0 - 12, 0)), pool.label, fill=(255, 255, 0))

    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    sidecar = {
        "resolution": [rows, cols],
        "scale": scale,
        "extent": [list(mask.extent[0]), list(mask.extent[1])],
        "pools": [
            {
                "label": p.label,
                "bbox_cells": list(p.bbox),
                "area": p.area,
                "centroid": list(p.centroid),
                "bleeding": p.bleeding,
                "clot": p.clot,
                "tool_adjacent": p.tool_adjacent,
            }
            for p in pools
        ],
        "distractor_tool": state.distractor_pos is not None,
    }
    return AnnotatedImage(buf.getvalue(), sidecar)


def target_mask(mask: BinaryMask, pools: list[PoolObservation], plan) -> BinaryMask:
    """Mask sensor: expose only the highest-priority surviving pool.

    The no-reasoning sentinel plan passes the whole scene mask through.
    Raises PlanExhausted when no planned pool survives.
    """
    if getattr(plan, "full_mask", False):
        return BinaryMask(mask.grid.copy(), mask.extent)
    by_label = {p.label: p for p in pools}
    for label in plan.labels:
        pool = by_label.get(label)
        if pool is not None:
            return BinaryMask(pool.grid.copy(), mask.extent)
    raise PlanExhausted(f"no surviving pool among plan {list(plan.labels)}")


@dataclass
class Observation:
    """Stacked frames handed to the motion layer."""

    height_map: HeightMap
    mask_stack: np.ndarray  # (4, rows, cols) bool; index 0 = current
    tool_stack: np.ndarray  # (4, 3) float; index 0 = current, normalized x/y
    extent: tuple[tuple[float, float], tuple[float, float]]

    @property
    def current_mask(self) -> np.ndarray:
        return self.mask_stack[0]

    @property
    def tool_position(self) -> np.ndarray:
        """Current tool position in workspace meters."""
        (x0, x1), (y0, y1) = self.extent
        t = self.tool_stack[0]
        return np.array([x0 + t[0] * (x1 - x0), y0 + t[1] * (y1 - y0), t[2]])


def build_observation(builder: "ObservationBuilder", mask: BinaryMask, tool_pos: np.ndarray) -> Observation:
    """Push the current frame into the history stack and return the stacked view."""
    return builder.push(mask, tool_pos)


class ObservationBuilder:
    """Fixed-length history stacking; the first frame pads by replication."""

    DEPTH = 4

    def __init__(self, height_map: HeightMap):
        self.height_map = height_map
        self.masks: list[np.ndarray] = []
        self.tools: list[np.ndarray] = []

    def push(self, mask: BinaryMask, tool_pos: np.ndarray) -> Observation:
        (x0, x1), (y0, y1) = mask.extent
        norm = np.array(
            [(tool_pos[0] - x0) / (x1 - x0), (tool_pos[1] - y0) / (y1 - y0), tool_pos[2]]
        )
        if not self.masks:
            self.masks = [mask.grid.copy()] * self.DEPTH
            self.tools = [norm.copy()] * self.DEPTH
        else:
            self.masks = [mask.grid.copy()] + self.masks[: self.DEPTH - 1]
            self.tools = [norm.copy()] + self.tools[: self.DEPTH - 1]
        return Observation(
            height_map=self.height_map,
            mask_stack=np.stack(self.masks),
            tool_stack=np.stack(self.tools),
            extent=mask.extent,
        )
