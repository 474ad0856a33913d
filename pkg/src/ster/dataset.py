"""Canonical scenario manifest: domain types, validation, and source adapters.

One manifest document (JSON, version 1) holds every scenario of a dataset
split.  Source-specific directory trees are converted by ``normalize_source``
so that nothing downstream has to branch on dataset quirks.  All record types
are frozen dataclasses; a loaded manifest is safe to share across threads.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import SterError

MANIFEST_VERSION = 1

PHASE_LABELS = {
    1: "prerecognition",
    2: "recognition",
    3: "judgment",
    4: "action",
    5: "avoidance",
}
CAMERA_KINDS = ("overhead_surveillance", "vehicle_dashboard")
ROLES = ("pedestrian", "vehicle")
BOX_SOURCES = ("human", "generated")
DATASET_SOURCES = ("WTS", "BDD")

FRAME_FILE_RE = re.compile(r"^\d{6}\.(png|jpg|jpeg)$")
FRAME_EXTENSIONS = (".png", ".jpg", ".jpeg")

GAZE_NORM_TOL = 1e-6


class ParseError(SterError):
    """Malformed manifest or source document."""


class ValidationError(SterError):
    """A record violates a manifest invariant."""


class UnsupportedLayout(SterError):
    """A source tree does not match any known adapter layout."""


@dataclass(frozen=True)
class VideoRecord:
    """One camera recording, stored as pre-extracted indexed frames."""

    video_id: str
    camera_kind: str
    fps: float
    frame_dir: str
    frame_count: int


@dataclass(frozen=True)
class PhaseSegment:
    """One of the five annotated scenario segments, in seconds."""

    number: int
    label: str
    start_time: float
    end_time: float


@dataclass(frozen=True)
class BBoxAnnotation:
    """Per-frame, per-role rectangle with provenance."""

    video_id: str
    frame_index: int
    role: str
    source: str
    x: float
    y: float
    w: float
    h: float


@dataclass(frozen=True)
class GazeAnnotation:
    """Image-space gaze ray: pixel origin plus unit direction."""

    video_id: str
    frame_index: int
    origin_x: float
    origin_y: float
    dir_x: float
    dir_y: float


@dataclass(frozen=True)
class CaptionRecord:
    """Ground-truth description for one (phase, subject) pair."""

    phase: int
    subject: str
    text: str


@dataclass(frozen=True)
class VqaItem:
    """Multiple-choice question; choices are keyed A.. in list order."""

    phase: int
    question: str
    choices: tuple[str, ...]
    correct: str

    def choice_keys(self) -> tuple[str, ...]:
        return tuple(chr(ord("A") + i) for i in range(len(self.choices)))


@dataclass(frozen=True)
class ScenarioRecord:
    """One traffic scenario with its videos, phases, and annotations."""

    scenario_id: str
    source: str
    videos: tuple[VideoRecord, ...]
    phases: tuple[PhaseSegment, ...]
    captions: tuple[CaptionRecord, ...]
    vqa: tuple[VqaItem, ...] = ()
    bboxes: tuple[BBoxAnnotation, ...] = ()
    gazes: tuple[GazeAnnotation, ...] = ()

    def video(self, video_id: str) -> VideoRecord:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise KeyError(video_id)

    def phase(self, number: int) -> PhaseSegment | None:
        for p in self.phases:
            if p.number == number:
                return p
        return None


@dataclass
class Manifest:
    """A validated list of scenarios plus the directory they resolve against."""

    scenarios: tuple[ScenarioRecord, ...]
    root: Path | None = None

    def __iter__(self):
        return iter(self.scenarios)

    def __len__(self) -> int:
        return len(self.scenarios)

    def __getitem__(self, i):
        return self.scenarios[i]

    def scenario(self, scenario_id: str) -> ScenarioRecord:
        for s in self.scenarios:
            if s.scenario_id == scenario_id:
                return s
        raise KeyError(scenario_id)


# ---------------------------------------------------------------------------
# parsing helpers

def _ctx_get(obj: dict, key: str, kind, ctx: str, optional: bool = False):
    if key not in obj:
        if optional:
            return None
        raise ParseError(f"{ctx}: missing field '{key}'")
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ParseError(f"{ctx}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _parse_video(obj: dict, ctx: str) -> VideoRecord:
    return VideoRecord(
        video_id=_ctx_get(obj, "video_id", str, ctx),
        camera_kind=_ctx_get(obj, "camera_kind", str, ctx),
        fps=_ctx_get(obj, "fps", float, ctx),
        frame_dir=_ctx_get(obj, "frame_dir", str, ctx),
        frame_count=_ctx_get(obj, "frame_count", int, ctx),
    )


def _parse_phase(obj: dict, ctx: str) -> PhaseSegment:
    return PhaseSegment(
        number=_ctx_get(obj, "number", int, ctx),
        label=_ctx_get(obj, "label", str, ctx),
        start_time=_ctx_get(obj, "start_time", float, ctx),
        end_time=_ctx_get(obj, "end_time", float, ctx),
    )


def _parse_bbox(obj: dict, ctx: str) -> BBoxAnnotation:
    return BBoxAnnotation(
        video_id=_ctx_get(obj, "video_id", str, ctx),
        frame_index=_ctx_get(obj, "frame_index", int, ctx),
        role=_ctx_get(obj, "role", str, ctx),
        source=_ctx_get(obj, "source", str, ctx),
        x=_ctx_get(obj, "x", float, ctx),
        y=_ctx_get(obj, "y", float, ctx),
        w=_ctx_get(obj, "w", float, ctx),
        h=_ctx_get(obj, "h", float, ctx),
    )


def _parse_gaze(obj: dict, ctx: str) -> GazeAnnotation:
    return GazeAnnotation(
        video_id=_ctx_get(obj, "video_id", str, ctx),
        frame_index=_ctx_get(obj, "frame_index", int, ctx),
        origin_x=_ctx_get(obj, "origin_x", float, ctx),
        origin_y=_ctx_get(obj, "origin_y", float, ctx),
        dir_x=_ctx_get(obj, "dir_x", float, ctx),
        dir_y=_ctx_get(obj, "dir_y", float, ctx),
    )


def _parse_caption(obj: dict, ctx: str) -> CaptionRecord:
    return CaptionRecord(
        phase=_ctx_get(obj, "phase", int, ctx),
        subject=_ctx_get(obj, "subject", str, ctx),
        text=_ctx_get(obj, "text", str, ctx),
    )


def _parse_vqa(obj: dict, ctx: str) -> VqaItem:
    choices = _ctx_get(obj, "choices", list, ctx)
    return VqaItem(
        phase=_ctx_get(obj, "phase", int, ctx),
        question=_ctx_get(obj, "question", str, ctx),
        choices=tuple(str(c) for c in choices),
        correct=_ctx_get(obj, "correct", str, ctx),
    )


def _parse_scenario(obj: dict, ctx: str) -> ScenarioRecord:
    return ScenarioRecord(
        scenario_id=_ctx_get(obj, "scenario_id", str, ctx),
        source=_ctx_get(obj, "source", str, ctx),
        videos=tuple(
            _parse_video(v, f"{ctx}.videos[{i}]")
            for i, v in enumerate(_ctx_get(obj, "videos", list, ctx))
        ),
        phases=tuple(
            _parse_phase(p, f"{ctx}.phases[{i}]")
            for i, p in enumerate(_ctx_get(obj, "phases", list, ctx))
        ),
        captions=tuple(
            _parse_caption(c, f"{ctx}.captions[{i}]")
            for i, c in enumerate(_ctx_get(obj, "captions", list, ctx))
        ),
        vqa=tuple(
            _parse_vqa(q, f"{ctx}.vqa[{i}]")
            for i, q in enumerate(obj.get("vqa", []))
        ),
        bboxes=tuple(
            _parse_bbox(b, f"{ctx}.bboxes[{i}]")
            for i, b in enumerate(obj.get("bboxes", []))
        ),
        gazes=tuple(
            _parse_gaze(g, f"{ctx}.gazes[{i}]")
            for i, g in enumerate(obj.get("gazes", []))
        ),
    )


# ---------------------------------------------------------------------------
# validation

def _count_frame_files(frame_dir: Path) -> int:
    return sum(1 for p in frame_dir.iterdir() if FRAME_FILE_RE.match(p.name))


def frame_path(video: VideoRecord, frame_index: int, root: Path | None = None) -> Path:
    """Resolve the image file for ``frame_index``, trying known extensions."""
    base = Path(video.frame_dir)
    if root is not None and not base.is_absolute():
        base = root / base
    for ext in FRAME_EXTENSIONS:
        candidate = base / f"{frame_index:06d}{ext}"
        if candidate.exists():
            return candidate
    return base / f"{frame_index:06d}{FRAME_EXTENSIONS[0]}"


def validate_scenario(s: ScenarioRecord, root: Path | None = None,
                      check_frames: bool = True) -> None:
    """Raise ValidationError naming the offending scenario and field."""
    sid = s.scenario_id
    if not sid:
        raise ValidationError("scenario with empty scenario_id")
    if s.source not in DATASET_SOURCES:
        raise ValidationError(f"{sid}: source must be one of {DATASET_SOURCES}, got {s.source!r}")

    video_ids = [v.video_id for v in s.videos]
    if len(set(video_ids)) != len(video_ids):
        raise ValidationError(f"{sid}: duplicate video_id in videos")
    for v in s.videos:
        if v.fps <= 0:
            raise ValidationError(f"{sid}: video {v.video_id}: fps must be > 0, got {v.fps}")
        if v.frame_count < 0:
            raise ValidationError(f"{sid}: video {v.video_id}: negative frame_count")
        if v.camera_kind not in CAMERA_KINDS:
            raise ValidationError(f"{sid}: video {v.video_id}: unknown camera_kind {v.camera_kind!r}")
        if check_frames:
            frame_dir = Path(v.frame_dir)
            if root is not None and not frame_dir.is_absolute():
                frame_dir = root / frame_dir
            if not frame_dir.is_dir():
                raise ValidationError(f"{sid}: video {v.video_id}: frame_dir {v.frame_dir} does not exist")
            n = _count_frame_files(frame_dir)
            if n != v.frame_count:
                raise ValidationError(
                    f"{sid}: video {v.video_id}: frame_count {v.frame_count} "
                    f"but {n} indexed frame files found"
                )

    numbers = [p.number for p in s.phases]
    if len(s.phases) > 5:
        raise ValidationError(f"{sid}: more than 5 phases")
    for prev, cur in zip(numbers, numbers[1:]):
        if cur <= prev:
            raise ValidationError(f"{sid}: phases not strictly increasing (phase {cur} after {prev})")
    for p in s.phases:
        if p.number not in PHASE_LABELS:
            raise ValidationError(f"{sid}: phase number {p.number} outside 1..5")
        if p.label != PHASE_LABELS[p.number]:
            raise ValidationError(
                f"{sid}: phase {p.number} labeled {p.label!r}, expected {PHASE_LABELS[p.number]!r}"
            )
        if p.start_time > p.end_time:
            raise ValidationError(f"{sid}: phase {p.number} has start_time > end_time")

    present = set(numbers)
    for c in s.captions:
        if c.phase not in present:
            raise ValidationError(f"{sid}: caption references absent phase {c.phase}")
        if c.subject not in ROLES:
            raise ValidationError(f"{sid}: caption subject {c.subject!r} not in {ROLES}")
        if not c.text:
            raise ValidationError(f"{sid}: empty caption text for phase {c.phase}")
    for q in s.vqa:
        if q.phase not in present:
            raise ValidationError(f"{sid}: vqa item references absent phase {q.phase}")
        if not 2 <= len(q.choices) <= 5:
            raise ValidationError(f"{sid}: vqa item must have 2-5 choices, got {len(q.choices)}")
        if q.correct not in q.choice_keys():
            raise ValidationError(f"{sid}: vqa correct key {q.correct!r} not in {q.choice_keys()}")

    by_id = {v.video_id: v for v in s.videos}
    for b in s.bboxes:
        if b.video_id not in by_id:
            raise ValidationError(f"{sid}: bbox references unknown video {b.video_id}")
        if b.w < 0 or b.h < 0:
            raise ValidationError(f"{sid}: bbox on {b.video_id}[{b.frame_index}] has negative size")
        if b.role not in ROLES or b.source not in BOX_SOURCES:
            raise ValidationError(f"{sid}: bbox on {b.video_id}[{b.frame_index}] has bad role/source")
        if not 0 <= b.frame_index < by_id[b.video_id].frame_count:
            raise ValidationError(
                f"{sid}: bbox frame_index {b.frame_index} outside video {b.video_id} "
                f"(frame_count {by_id[b.video_id].frame_count})"
            )
    for g in s.gazes:
        if g.video_id not in by_id:
            raise ValidationError(f"{sid}: gaze references unknown video {g.video_id}")
        if not 0 <= g.frame_index < by_id[g.video_id].frame_count:
            raise ValidationError(f"{sid}: gaze frame_index {g.frame_index} outside video {g.video_id}")
        norm = math.hypot(g.dir_x, g.dir_y)
        if not (1.0 - GAZE_NORM_TOL) <= norm <= (1.0 + GAZE_NORM_TOL):
            raise ValidationError(
                f"{sid}: gaze direction on {g.video_id}[{g.frame_index}] not unit length (norm {norm})"
            )


def validate_manifest(m: Manifest, check_frames: bool = True) -> None:
    seen: set[str] = set()
    for s in m.scenarios:
        if s.scenario_id in seen:
            raise ValidationError(f"duplicate scenario_id {s.scenario_id!r} in manifest")
        seen.add(s.scenario_id)
        validate_scenario(s, root=m.root, check_frames=check_frames)


# ---------------------------------------------------------------------------
# load / save

def load_manifest(path: str | Path, check_frames: bool = True) -> Manifest:
    """Load and fully validate a canonical manifest document."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno} col {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    version = doc.get("version")
    if version != MANIFEST_VERSION:
        raise ParseError(f"{path}: unsupported manifest version {version!r}")
    raw = _ctx_get(doc, "scenarios", list, str(path))
    scenarios = tuple(
        _parse_scenario(s, f"{path}: scenarios[{i}]") for i, s in enumerate(raw)
    )
    manifest = Manifest(scenarios=scenarios, root=path.parent)
    validate_manifest(manifest, check_frames=check_frames)
    return manifest


def _record_dict(record) -> dict:
    out = {}
    for f in fields(record):
        value = getattr(record, f.name)
        if isinstance(value, tuple):
            if value and hasattr(value[0], "__dataclass_fields__"):
                value = [_record_dict(v) for v in value]
            else:
                value = list(value)
        out[f.name] = value
    return out


def manifest_to_dict(m: Manifest) -> dict:
    return {"version": MANIFEST_VERSION, "scenarios": [_record_dict(s) for s in m.scenarios]}


def save_manifest(m: Manifest, path: str | Path) -> None:
    """Write the canonical form: fixed key order, 2-space indent, newline EOF."""
    text = json.dumps(manifest_to_dict(m), indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# time -> frame mapping

def frames_in_phase(video: VideoRecord, phase: PhaseSegment) -> list[int]:
    """All frame indices of ``video`` inside the phase interval, ascending.

    Uses floor(t * fps) on both ends with the end clamped to the last frame,
    so no index past the phase end is ever returned.  Empty when the phase
    lies outside the video.
    """
    lo = max(0, math.floor(phase.start_time * video.fps))
    hi = min(math.floor(phase.end_time * video.fps), video.frame_count - 1)
    return list(range(lo, hi + 1))


# ---------------------------------------------------------------------------
# source adapters

def _read_json(path: Path, kind, ctx: str):
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError(f"{ctx}: missing {path.name}")
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, kind):
        raise ParseError(f"{path}: expected {kind.__name__}")
    return doc


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    if not path.exists():
        return rows
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: line {lineno}: {e.msg}") from e
    return rows


def _scenario_sidecars(sdir: Path, sid: str, source: str,
                       videos: tuple[VideoRecord, ...]) -> ScenarioRecord:
    phases = tuple(
        _parse_phase(p, f"{sdir}/phases.json[{i}]")
        for i, p in enumerate(_read_json(sdir / "phases.json", list, str(sdir)))
    )
    captions = tuple(
        _parse_caption(c, f"{sdir}/captions.json[{i}]")
        for i, c in enumerate(_read_json(sdir / "captions.json", list, str(sdir)))
    )
    vqa = ()
    if (sdir / "vqa.json").exists():
        vqa = tuple(
            _parse_vqa(q, f"{sdir}/vqa.json[{i}]")
            for i, q in enumerate(_read_json(sdir / "vqa.json", list, str(sdir)))
        )
    bboxes = tuple(
        _parse_bbox(b, f"{sdir}/bboxes.jsonl[{i}]")
        for i, b in enumerate(_read_jsonl(sdir / "bboxes.jsonl"))
    )
    gazes = tuple(
        _parse_gaze(g, f"{sdir}/gazes.jsonl[{i}]")
        for i, g in enumerate(_read_jsonl(sdir / "gazes.jsonl"))
    )
    return ScenarioRecord(
        scenario_id=sid, source=source, videos=videos, phases=phases,
        captions=captions, vqa=vqa, bboxes=bboxes, gazes=gazes,
    )


_WTS_CAMERAS = {"overhead": "overhead_surveillance", "dashboard": "vehicle_dashboard"}


def _normalize_wts_scenario(sdir: Path) -> ScenarioRecord:
    vdirs = sorted(p for p in (sdir / "videos").iterdir() if p.is_dir())
    if not vdirs:
        raise UnsupportedLayout(f"{sdir}: videos/ contains no video directories")
    videos = []
    for vdir in vdirs:
        meta = _read_json(vdir / "meta.json", dict, str(vdir))
        camera = _ctx_get(meta, "camera", str, str(vdir / "meta.json"))
        if camera not in _WTS_CAMERAS:
            raise ParseError(f"{vdir}/meta.json: unknown camera {camera!r}")
        videos.append(VideoRecord(
            video_id=vdir.name,
            camera_kind=_WTS_CAMERAS[camera],
            fps=_ctx_get(meta, "fps", float, str(vdir / "meta.json")),
            frame_dir=str(vdir.resolve()),
            frame_count=_count_frame_files(vdir),
        ))
    return _scenario_sidecars(sdir, sdir.name, "WTS", tuple(videos))


def _normalize_bdd_scenario(sdir: Path) -> ScenarioRecord:
    frames = sdir / "frames"
    meta = _read_json(sdir / "meta.json", dict, str(sdir))
    video = VideoRecord(
        video_id="dashboard",
        camera_kind="vehicle_dashboard",
        fps=_ctx_get(meta, "fps", float, str(sdir / "meta.json")),
        frame_dir=str(frames.resolve()),
        frame_count=_count_frame_files(frames),
    )
    return _scenario_sidecars(sdir, sdir.name, "BDD", (video,))


def normalize_source(raw_path: str | Path, source: str) -> Manifest:
    """Convert a WTS- or BDD-style annotation tree to a canonical manifest.

    WTS scenarios hold one or more camera directories under ``videos/``;
    BDD scenarios hold a single dashboard recording under ``frames/``.
    Scenario directories are visited in sorted order, so two runs over the
    same tree produce identical manifests.
    """
    raw_path = Path(raw_path)
    if source not in DATASET_SOURCES:
        raise ValidationError(f"unknown source {source!r}")
    if not raw_path.is_dir():
        raise UnsupportedLayout(f"{raw_path}: not a directory")
    sdirs = sorted(p for p in raw_path.iterdir() if p.is_dir())
    if not sdirs:
        raise UnsupportedLayout(f"{raw_path}: no scenario directories found")

    scenarios = []
    for sdir in sdirs:
        if source == "WTS":
            if not (sdir / "videos").is_dir():
                raise UnsupportedLayout(f"{sdir}: expected a videos/ directory for WTS layout")
            scenarios.append(_normalize_wts_scenario(sdir))
        else:
            if not (sdir / "frames").is_dir() or not (sdir / "meta.json").exists():
                raise UnsupportedLayout(f"{sdir}: expected frames/ and meta.json for BDD layout")
            scenarios.append(_normalize_bdd_scenario(sdir))

    manifest = Manifest(scenarios=tuple(scenarios), root=raw_path)
    validate_manifest(manifest)
    return manifest
