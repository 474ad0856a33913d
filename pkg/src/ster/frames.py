"""Temporal frame selection and best-view filtering.

Selection rules per scenario:

* spatial inputs: the first frame of phases 1 and 2 (environmental context,
  taken from the phase's best camera) plus the frame with the largest
  pedestrian box in phases 3 and 4 (pedestrian appearance), searched across
  every video.
* temporal inputs, phases 1-3: the frame with the largest pedestrian box
  across all videos, plus one extra frame with the largest pedestrian+vehicle
  box sum (dropped when it coincides with the first).
* temporal inputs, phases 4-5: three uniformly sampled frames, restricted to
  the single camera whose pedestrian+vehicle box areas sum highest over the
  phase.

Human-annotated boxes take precedence over machine-generated ones for the
same (frame, role).  All argmax ties break on (smaller frame_index, then
lexicographically smaller video_id) so selections are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dataset import BBoxAnnotation, ScenarioRecord, VideoRecord, frames_in_phase
from .errors import SterError

TEMPORAL_SAMPLES = 3
SPATIAL_PHASES = (1, 2, 3, 4)
PAIR_PHASES = (1, 2, 3)


class MissingPhase(SterError):
    """Scenario lacks a phase the selection rule needs."""


class EmptyPhase(SterError):
    """No frames fall inside the phase on any eligible video."""


@dataclass(frozen=True)
class FrameRef:
    video_id: str
    frame_index: int


@dataclass(frozen=True)
class FrameSelection:
    """Frames chosen for one (purpose, phase), with one rationale per frame."""

    purpose: str  # "spatial" | "temporal"
    phase: int
    frames: tuple[FrameRef, ...]
    rationale: tuple[str, ...]


def bbox_area(b: BBoxAnnotation) -> float:
    return b.w * b.h


def uniform_sample(indices: list[int], k: int) -> list[int]:
    """Pick min(k, n) evenly spaced entries, always keeping the endpoints.

    Position j takes indices[floor(j*(n-1)/(k-1))]; duplicates collapse in
    order, and k=1 degenerates to the first entry.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not indices:
        raise EmptyPhase("uniform_sample on empty index list")
    n = len(indices)
    if k == 1:
        return [indices[0]]
    picked = []
    for j in range(k):
        idx = indices[(j * (n - 1)) // (k - 1)]
        if not picked or picked[-1] != idx:
            picked.append(idx)
    return picked


# ---------------------------------------------------------------------------
# per-frame role areas

def role_areas(scenario: ScenarioRecord) -> dict[tuple[str, int, str], float]:
    """Largest box area per (video_id, frame_index, role).

    Human boxes shadow generated ones: if any human box exists for a key,
    generated boxes for that key are ignored.
    """
    best: dict[tuple[str, int, str], tuple[int, float]] = {}
    rank = {"human": 1, "generated": 0}
    for b in scenario.bboxes:
        key = (b.video_id, b.frame_index, b.role)
        cand = (rank[b.source], bbox_area(b))
        prev = best.get(key)
        if prev is None or cand[0] > prev[0] or (cand[0] == prev[0] and cand[1] > prev[1]):
            best[key] = cand
    return {key: area for key, (_, area) in best.items()}


def _require_phase(scenario: ScenarioRecord, phase: int):
    seg = scenario.phase(phase)
    if seg is None:
        raise MissingPhase(f"{scenario.scenario_id}: phase {phase} not annotated")
    return seg


def _phase_frames(scenario: ScenarioRecord, phase: int) -> list[tuple[VideoRecord, int]]:
    seg = _require_phase(scenario, phase)
    out = []
    for video in scenario.videos:
        for idx in frames_in_phase(video, seg):
            out.append((video, idx))
    return out


def _argmax_frame(scenario: ScenarioRecord, phase: int, roles: tuple[str, ...],
                  areas: dict) -> tuple[FrameRef, float]:
    """Frame maximizing the summed areas of ``roles``; deterministic ties."""
    candidates = _phase_frames(scenario, phase)
    if not candidates:
        raise EmptyPhase(f"{scenario.scenario_id}: no frames in phase {phase}")
    best_key = None
    best_ref = None
    best_area = 0.0
    for video, idx in candidates:
        area = sum(areas.get((video.video_id, idx, role), 0.0) for role in roles)
        key = (-area, idx, video.video_id)
        if best_key is None or key < best_key:
            best_key = key
            best_ref = FrameRef(video.video_id, idx)
            best_area = area
    return best_ref, best_area


def best_camera(scenario: ScenarioRecord, phase: int,
                areas: dict | None = None) -> str:
    """Video whose pedestrian+vehicle areas sum highest over the phase."""
    seg = _require_phase(scenario, phase)
    if not scenario.videos:
        raise MissingPhase(f"{scenario.scenario_id}: no videos")
    if areas is None:
        areas = role_areas(scenario)
    best_id = None
    best_sum = -1.0
    for video in sorted(scenario.videos, key=lambda v: v.video_id):
        total = 0.0
        for idx in frames_in_phase(video, seg):
            total += areas.get((video.video_id, idx, "pedestrian"), 0.0)
            total += areas.get((video.video_id, idx, "vehicle"), 0.0)
        if total > best_sum:
            best_sum = total
            best_id = video.video_id
    return best_id


def _first_frame_of_phase(scenario: ScenarioRecord, phase: int, areas: dict) -> FrameRef:
    seg = _require_phase(scenario, phase)
    cam = best_camera(scenario, phase, areas)
    idxs = frames_in_phase(scenario.video(cam), seg)
    if not idxs:
        raise EmptyPhase(f"{scenario.scenario_id}: no frames in phase {phase} on camera {cam}")
    return FrameRef(cam, idxs[0])


def select_spatial_frames(scenario: ScenarioRecord) -> list[FrameSelection]:
    """One frame per phase 1-4 for appearance/environment captioning.

    Phases 1-2 contribute the first frame (best camera); phases 3-4 the
    largest-pedestrian-box frame across all videos, falling back to the
    first frame when no pedestrian box exists anywhere in the phase.
    """
    areas = role_areas(scenario)
    for p in SPATIAL_PHASES:
        _require_phase(scenario, p)
    selections = []
    for p in SPATIAL_PHASES:
        if p in (1, 2):
            ref = _first_frame_of_phase(scenario, p, areas)
            why = f"first frame of phase {p} in best camera {ref.video_id}"
        else:
            ref, area = _argmax_frame(scenario, p, ("pedestrian",), areas)
            if area > 0.0:
                why = f"largest pedestrian bbox (area {area:g})"
            else:
                ref = _first_frame_of_phase(scenario, p, areas)
                why = (f"no pedestrian box in phase {p}; "
                       f"fell back to first frame of best camera {ref.video_id}")
        selections.append(FrameSelection(
            purpose="spatial", phase=p, frames=(ref,), rationale=(why,),
        ))
    return selections


def select_temporal_frames(scenario: ScenarioRecord, phase: int,
                           k: int = TEMPORAL_SAMPLES) -> FrameSelection:
    """Frames feeding the temporal caption for one phase (see module doc)."""
    _require_phase(scenario, phase)
    areas = role_areas(scenario)

    if phase in PAIR_PHASES:
        best_ref, best_area = _argmax_frame(scenario, phase, ("pedestrian",), areas)
        add_ref, add_area = _argmax_frame(scenario, phase, ("pedestrian", "vehicle"), areas)
        frames = [best_ref]
        rationale = [f"largest pedestrian bbox (area {best_area:g})"]
        if add_ref != best_ref:
            frames.append(add_ref)
            rationale.append(f"largest pedestrian+vehicle bbox sum (area {add_area:g})")
        return FrameSelection(
            purpose="temporal", phase=phase,
            frames=tuple(frames), rationale=tuple(rationale),
        )

    cam = best_camera(scenario, phase, areas)
    seg = scenario.phase(phase)
    idxs = frames_in_phase(scenario.video(cam), seg)
    picked = uniform_sample(idxs, k)
    return FrameSelection(
        purpose="temporal", phase=phase,
        frames=tuple(FrameRef(cam, i) for i in picked),
        rationale=tuple(
            f"uniform sample {j + 1}/{len(picked)} in best camera {cam}"
            for j in range(len(picked))
        ),
    )


def select_all(scenario: ScenarioRecord, k: int = TEMPORAL_SAMPLES) -> dict:
    """Spatial list plus per-phase temporal selections, as the CLI exports them."""
    temporal = {}
    for seg in scenario.phases:
        try:
            temporal[seg.number] = select_temporal_frames(scenario, seg.number, k=k)
        except EmptyPhase:
            continue
    return {"spatial": select_spatial_frames(scenario), "temporal": temporal}


def selection_to_dict(sel: FrameSelection) -> dict:
    return {
        "purpose": sel.purpose,
        "phase": sel.phase,
        "frames": [{"video_id": f.video_id, "frame_index": f.frame_index} for f in sel.frames],
        "rationale": list(sel.rationale),
    }


def selection_from_dict(obj: dict) -> FrameSelection:
    return FrameSelection(
        purpose=obj["purpose"],
        phase=obj["phase"],
        frames=tuple(FrameRef(f["video_id"], f["frame_index"]) for f in obj["frames"]),
        rationale=tuple(obj["rationale"]),
    )
