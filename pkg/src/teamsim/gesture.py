"""Glove-side pipeline: calibration, fist-activation FSM, gesture classification,
synthetic trace generation, and the simulated glove drift model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# classifier thresholds (hysteresis band tolerates unequal finger dexterity)
FIST_THRESHOLD = 0.8
FIST_HOLD_S = 0.5
GESTURE_WINDOW_S = 1.5
EXTENDED_MAX = 0.3
FLEXED_MIN = 0.7
OSC_AMPLITUDE = 0.15  # peak-to-peak deviation a crossing must span
OSC_MIN_CROSSINGS = 2
CAL_MIN_RANGE = 0.05

QUICK_PULSE = "quick"
LONG_PULSE = "long"

THUMB = 0
NON_THUMB = (1, 2, 3, 4)


class FrameOrderError(ValueError):
    pass


class WindowTooShort(ValueError):
    pass


class CalibrationDegenerate(ValueError):
    def __init__(self, finger: int):
        super().__init__(f"finger {finger} raw range below {CAL_MIN_RANGE}")
        self.finger = finger


@dataclass(frozen=True)
class GloveFrame:
    t: float
    flexion: tuple[float, float, float, float, float]  # thumb..pinky, 0=extended 1=flexed
    palm_yaw: float = 0.0
    palm_pitch: float = 0.0
    palm_facing_out: bool = False


@dataclass(frozen=True)
class Gesture:
    kind: str  # traverse_point | explore_oscillate | stop_palm | return_sign | unrecognized
    fingers: int | None = None

    def __post_init__(self):
        if self.kind in ("traverse_point", "explore_oscillate") and self.fingers not in (1, 2, 3):
            raise ValueError(f"{self.kind} needs fingers in 1..3, got {self.fingers}")


UNRECOGNIZED = Gesture("unrecognized")


@dataclass(frozen=True)
class HapticEvent:
    pattern: str  # QUICK_PULSE | LONG_PULSE
    t: float


@dataclass(frozen=True)
class GestureEvent:
    gesture: Gesture
    t: float


@dataclass(frozen=True)
class RecalibrationEvent:
    t: float


@dataclass(frozen=True)
class Calibration:
    """Per-finger raw range; normalization maps raw into [0, 1]."""

    ranges: tuple[tuple[float, float], ...]  # (raw_min, raw_max) x5

    def normalize(self, raw: tuple[float, ...]) -> tuple[float, ...]:
        out = []
        for value, (lo, hi) in zip(raw, self.ranges):
            out.append(min(1.0, max(0.0, (value - lo) / (hi - lo))))
        return tuple(out)


def calibrate(prompts: dict[str, list[tuple[float, tuple[float, ...]]]]) -> Calibration:
    """Derive per-finger raw_min/raw_max from the 5th/95th percentiles over the
    prompt windows. Prompts must include 'fist' and 'open' holds of at least 1 s."""
    for required in ("fist", "open"):
        frames = prompts.get(required)
        if not frames or frames[-1][0] - frames[0][0] < 1.0:
            raise ValueError(f"calibration needs a '{required}' hold of at least 1 s")
    samples = np.array([raw for frames in prompts.values() for _, raw in frames])
    lo = np.percentile(samples, 5, axis=0)
    hi = np.percentile(samples, 95, axis=0)
    for finger in range(5):
        if hi[finger] - lo[finger] < CAL_MIN_RANGE:
            raise CalibrationDegenerate(finger)
    return Calibration(ranges=tuple((float(lo[i]), float(hi[i])) for i in range(5)))


def _finger_state(mean_flexion: float) -> str:
    if mean_flexion < EXTENDED_MAX:
        return "extended"
    if mean_flexion > FLEXED_MIN:
        return "flexed"
    return "ambiguous"


def oscillation_count(frames: list[GloveFrame], finger_indices: tuple[int, ...]) -> int:
    """Zero crossings of the smoothed mean flexion (over the given fingers)
    around its window mean, counting only swings of at least OSC_AMPLITUDE
    peak to peak."""
    if not finger_indices or len(frames) < 3:
        return 0
    m = np.array([np.mean([f.flexion[i] for i in finger_indices]) for f in frames])
    # ~0.1 s box filter so sensor noise cannot fake a crossing
    if len(frames) >= 2:
        dt = (frames[-1].t - frames[0].t) / (len(frames) - 1)
        k = max(1, int(round(0.1 / dt))) if dt > 0 else 1
        if k > 1:
            kernel = np.ones(k) / k
            m = np.convolve(m, kernel, mode="same")
    d = m - m.mean()
    half = OSC_AMPLITUDE / 2.0
    crossings = 0
    state = 0  # -1 below, +1 above, 0 unseen
    for v in d:
        if v >= half and state <= 0:
            if state == -1:
                crossings += 1
            state = 1
        elif v <= -half and state >= 0:
            if state == 1:
                crossings += 1
            state = -1
    return crossings


def classify_window(frames: list[GloveFrame]) -> Gesture:
    """Map a gesture window to one of the four commands or unrecognized.

    Finger state comes from mean flexion over the window; the stop palm needs
    all five fingers extended and an outward-facing palm; traverse and explore
    share the pointing shape and differ by oscillation of the pointing fingers;
    the return sign is a thumb-out fist.
    """
    if len(frames) < 2 or frames[-1].t - frames[0].t < GESTURE_WINDOW_S - 1e-9:
        raise WindowTooShort(f"window must span at least {GESTURE_WINDOW_S} s")
    means = [float(np.mean([f.flexion[i] for f in frames])) for i in range(5)]
    states = [_finger_state(v) for v in means]
    facing_out = sum(1 for f in frames if f.palm_facing_out) * 2 > len(frames)
    if all(s == "extended" for s in states) and facing_out:
        return Gesture("stop_palm")
    if states[THUMB] == "extended" and all(states[i] == "flexed" for i in NON_THUMB):
        return Gesture("return_sign")
    extended = tuple(i for i in NON_THUMB if states[i] == "extended")
    others_flexed = all(states[i] == "flexed" for i in NON_THUMB if i not in extended)
    if len(extended) in (1, 2, 3) and others_flexed:
        osc = oscillation_count(frames, extended)
        if osc >= OSC_MIN_CROSSINGS:
            return Gesture("explore_oscillate", len(extended))
        return Gesture("traverse_point", len(extended))
    return UNRECOGNIZED


IDLE = "IDLE"
ARMED = "ARMED"


class ActivationFsm:
    """Arms on a held fist, then classifies the following gesture window.

    Each armed episode ends in exactly one gesture event (command) or one long
    haptic pulse (failed recognition), never both.
    """

    def __init__(self):
        self.state = IDLE
        self._last_t: float | None = None
        self._fist_start: float | None = None
        self._armed_at: float | None = None
        self._window: list[GloveFrame] = []

    def step(self, frame: GloveFrame) -> list[object]:
        if self._last_t is not None and frame.t <= self._last_t:
            raise FrameOrderError(f"frame at t={frame.t} after t={self._last_t}")
        self._last_t = frame.t
        events: list[object] = []
        if self.state == IDLE:
            if all(v > FIST_THRESHOLD for v in frame.flexion):
                if self._fist_start is None:
                    self._fist_start = frame.t
                elif frame.t - self._fist_start >= FIST_HOLD_S:
                    self.state = ARMED
                    self._armed_at = frame.t
                    self._window = [frame]
                    self._fist_start = None
                    events.append(HapticEvent(QUICK_PULSE, frame.t))
            else:
                self._fist_start = None
        elif self.state == ARMED:
            self._window.append(frame)
            if frame.t - self._armed_at >= GESTURE_WINDOW_S:
                gesture = classify_window(self._window)
                if gesture.kind == "unrecognized":
                    events.append(HapticEvent(LONG_PULSE, frame.t))
                else:
                    events.append(GestureEvent(gesture, frame.t))
                self.state = IDLE
                self._window = []
                self._armed_at = None
        return events


@dataclass
class GloveDriftModel:
    yaw_bias_sigma: float = 0.0  # rad per sqrt-second
    flexion_bias_sigma: float = 0.0  # flexion units per sqrt-second
    seed: int = 0


class GloveSimulator:
    """Applies accumulating sensor drift to ideal frames; recalibration zeroes it."""

    def __init__(self, model: GloveDriftModel):
        self.model = model
        self.rng = np.random.default_rng(model.seed)
        self.yaw_bias = 0.0
        self.flexion_bias = np.zeros(5)
        self._last_t: float | None = None

    def corrupt(self, frame: GloveFrame) -> GloveFrame:
        if self._last_t is not None:
            dt = frame.t - self._last_t
            if dt > 0:
                sq = math.sqrt(dt)
                self.yaw_bias += self.model.yaw_bias_sigma * sq * self.rng.normal()
                self.flexion_bias += self.model.flexion_bias_sigma * sq * self.rng.normal(size=5)
        self._last_t = frame.t
        flex = tuple(min(1.0, max(0.0, v + b)) for v, b in zip(frame.flexion, self.flexion_bias))
        return GloveFrame(
            t=frame.t,
            flexion=flex,
            palm_yaw=frame.palm_yaw + self.yaw_bias,
            palm_pitch=frame.palm_pitch,
            palm_facing_out=frame.palm_facing_out,
        )

    def recalibrate(self, t: float = 0.0) -> RecalibrationEvent:
        self.yaw_bias = 0.0
        self.flexion_bias[:] = 0.0
        return RecalibrationEvent(t=t)


def drift_recalibrate(glove: GloveSimulator, t: float = 0.0) -> RecalibrationEvent:
    """Reset the simulated glove's yaw-bias walk and flexion baselines."""
    return glove.recalibrate(t)


# ----- synthetic trace generation ---------------------------------------------

RELAXED = 0.45
FIST = 0.95
FLEXED_HOLD = 0.92
EXTENDED_HOLD = 0.06
OSC_CENTER = 0.15
OSC_AMP = 0.25

FRAME_RATE = 50.0


@dataclass
class TraceSpec:
    kind: str
    fingers: int = 1
    seed: int = 0
    noise_sigma: float = 0.01
    frame_rate: float = FRAME_RATE
    idle_time: float = 0.4
    fist_hold: float = 0.62  # past the 0.5 s arming mark
    settle: float = 0.06  # reaction lag after the arming pulse
    transition: float = 0.08
    tail: float = 0.3


def _gesture_targets(kind: str, fingers: int) -> tuple[np.ndarray, bool, tuple[int, ...]]:
    """Target flexion per finger during the gesture hold, palm facing, and the
    set of oscillating fingers."""
    flex = np.full(5, FLEXED_HOLD)
    osc: tuple[int, ...] = ()
    facing = False
    if kind in ("traverse_point", "explore_oscillate"):
        pointing = NON_THUMB[:fingers]
        for i in pointing:
            flex[i] = EXTENDED_HOLD
        if kind == "explore_oscillate":
            for i in pointing:
                flex[i] = OSC_CENTER
            osc = pointing
    elif kind == "stop_palm":
        flex[:] = EXTENDED_HOLD
        facing = True
    elif kind == "return_sign":
        flex[THUMB] = EXTENDED_HOLD
    else:
        raise ValueError(f"unknown gesture kind {kind!r}")
    return flex, facing, osc


def make_gesture_trace(spec: TraceSpec) -> list[GloveFrame]:
    """Idle, fist hold through the arming mark, short settle, then the gesture
    held past the end of the classification window."""
    rng = np.random.default_rng(spec.seed)
    dt = 1.0 / spec.frame_rate
    target, facing, osc = _gesture_targets(spec.kind, spec.fingers)
    t_fist = spec.idle_time
    t_gesture = t_fist + FIST_HOLD_S + spec.settle + spec.transition
    t_end_hold = t_fist + FIST_HOLD_S + GESTURE_WINDOW_S + 2 * dt
    t_end = t_end_hold + spec.tail
    frames = []
    t = 0.0
    osc_freq = 2.0
    while t <= t_end + 1e-9:
        if t < t_fist:
            flex = np.full(5, RELAXED)
            out = False
        elif t < t_fist + FIST_HOLD_S + spec.settle:
            flex = np.full(5, FIST)
            out = False
        elif t < t_gesture:
            frac = (t - (t_fist + FIST_HOLD_S + spec.settle)) / spec.transition
            flex = FIST + (target - FIST) * frac
            out = facing and frac > 0.5
        elif t < t_end_hold:
            flex = target.copy()
            for i in osc:
                flex[i] = min(1.0, max(0.02, OSC_CENTER + OSC_AMP * math.sin(
                    2 * math.pi * osc_freq * (t - t_gesture))))
            out = facing
        else:
            flex = np.full(5, RELAXED)
            out = False
        noisy = np.clip(flex + rng.normal(0.0, spec.noise_sigma, size=5), 0.0, 1.0)
        frames.append(GloveFrame(t=round(t, 6), flexion=tuple(float(v) for v in noisy),
                                 palm_facing_out=out))
        t += dt
    return frames


def make_failed_trace(seed: int = 0, noise_sigma: float = 0.01,
                      frame_rate: float = FRAME_RATE) -> list[GloveFrame]:
    """Valid arming fist followed by an ambiguous half-open hand: the pipeline
    must answer with a long pulse and no command."""
    rng = np.random.default_rng(seed)
    dt = 1.0 / frame_rate
    frames = []
    t = 0.0
    while t <= 2.9:
        if t < 0.3:
            flex = np.full(5, RELAXED)
        elif t < 0.95:
            flex = np.full(5, FIST)
        else:
            flex = np.full(5, 0.5)  # inside the ambiguous band for every finger
        noisy = np.clip(flex + rng.normal(0.0, noise_sigma, size=5), 0.0, 1.0)
        frames.append(GloveFrame(t=round(t, 6), flexion=tuple(float(v) for v in noisy)))
        t += dt
    return frames


def make_no_activation_trace(seed: int = 0, duration: float = 4.0,
                             noise_sigma: float = 0.02,
                             frame_rate: float = FRAME_RATE) -> list[GloveFrame]:
    """Random hand motion that never holds a full fist for 0.5 s; by the
    no-activation safety property it must produce no events at all."""
    rng = np.random.default_rng(seed)
    dt = 1.0 / frame_rate
    frames = []
    t = 0.0
    current = rng.uniform(0.1, 0.7, size=5)
    target = rng.uniform(0.0, 0.75, size=5)
    seg_left = rng.uniform(0.1, 0.4)
    fist_run = 0.0
    while t <= duration:
        seg_left -= dt
        if seg_left <= 0:
            # occasional near-fist burst kept safely under the hold threshold
            if rng.random() < 0.25:
                target = rng.uniform(0.82, 1.0, size=5)
                seg_left = rng.uniform(0.05, 0.3)
            else:
                target = rng.uniform(0.0, 0.75, size=5)
                seg_left = rng.uniform(0.1, 0.4)
        current = current + (target - current) * min(1.0, 8.0 * dt)
        if all(v > FIST_THRESHOLD for v in current):
            fist_run += dt
            if fist_run >= FIST_HOLD_S - 3 * dt:
                current = current * 0.5  # force the fist open before arming
                fist_run = 0.0
        else:
            fist_run = 0.0
        noisy = np.clip(current + rng.normal(0.0, noise_sigma, size=5), 0.0, 1.0)
        frames.append(GloveFrame(t=round(t, 6), flexion=tuple(float(v) for v in noisy)))
        t += dt
    return frames


def save_trace(path: str | Path, frames: list[GloveFrame]) -> None:
    lines = []
    for f in frames:
        flex = " ".join(f"{v:.6f}" for v in f.flexion)
        lines.append(f"{f.t:.6f} {flex} {f.palm_yaw:.6f} {f.palm_pitch:.6f} "
                     f"{1 if f.palm_facing_out else 0}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace(path: str | Path) -> list[GloveFrame]:
    frames = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 9:
            raise ValueError(f"bad trace line: {line!r}")
        frames.append(GloveFrame(
            t=float(parts[0]),
            flexion=tuple(float(v) for v in parts[1:6]),
            palm_yaw=float(parts[6]),
            palm_pitch=float(parts[7]),
            palm_facing_out=parts[8] == "1",
        ))
    return frames
