"""Activity-to-user mapping (Stage 2).

An IMU change of one user is *exclusive* when some audio change interval,
widened by small adjustment windows (the modalities are not perfectly
synchronized), contains it while the other user's IMU shows no change across
that widened window. The audio heard during each exclusive change belongs to
the other user's ongoing activity, so a majority vote over the exclusive-change
list of user m yields the primary-activity label of user n. When both users
end up with the same label, the decision derived from the opportunistic user
(the one with more exclusive changes) is kept and the opportunistic user's own
label is left undecided.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ValidationError
from .har import HarBackend
from .imu_cpd import ChangeTimeline
from .model import ActivityLabel, AudioStream, Interval, slice_audio


@dataclass(frozen=True)
class MapperConfig:
    min_gap_ms: float = 1000.0
    adjust_pre_ms: float = 500.0
    adjust_post_ms: float = 500.0
    context_pad_ms: float = 2000.0
    vote_dominance: float = 1.05
    context_presence_min: float = 0.15
    min_votes: int = 2
    assign_by_elimination: bool = False

    def __post_init__(self):
        if min(self.min_gap_ms, self.adjust_pre_ms, self.adjust_post_ms,
               self.context_pad_ms) < 0:
            raise ValidationError("mapper durations must be non-negative")
        if self.min_gap_ms < 1000.0:
            raise ValidationError("min gap must be at least 1000 ms")
        if self.vote_dominance < 1.0:
            raise ValidationError("vote dominance factor must be at least 1")
        if not 0.0 <= self.context_presence_min <= 1.0:
            raise ValidationError("context presence threshold must lie in [0, 1]")
        if self.min_votes < 1:
            raise ValidationError("min_votes must be at least 1")


@dataclass(frozen=True)
class ExclusiveChange:
    """One exclusive IMU change with its enclosing audio change interval."""

    user: str
    imu_interval: Interval
    audio_interval: Interval

    def __post_init__(self):
        if not self.audio_interval.contains(self.imu_interval):
            raise ValidationError(
                "exclusive change must satisfy theta <= nu < eta <= zeta"
            )


@dataclass(frozen=True)
class ExclusiveChangeList:
    user: str
    entries: tuple[ExclusiveChange, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        starts = [e.imu_interval.start_ms for e in self.entries]
        if any(a > b for a, b in zip(starts, starts[1:])):
            raise ValidationError("exclusive changes must be time-sorted")

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class VoteResult:
    """Majority vote outcome for the *other* user; label None means no decision."""

    label: ActivityLabel | None
    votes: int
    total: int


@dataclass(frozen=True)
class UserActivityMap:
    """Final per-user primary-activity assignments plus conflict bookkeeping."""

    assignments: Mapping[str, tuple[ActivityLabel, int, int]]
    opportunistic_user: str | None = None
    conflict: bool = False
    conflict_resolved: bool = False

    def __post_init__(self):
        object.__setattr__(self, "assignments", dict(self.assignments))
        labels = [a[0] for a in self.assignments.values()]
        if len(labels) != len(set(labels)):
            raise ValidationError("the same label cannot be assigned to both users")

    def label_for(self, user: str) -> ActivityLabel | None:
        entry = self.assignments.get(user)
        return entry[0] if entry else None


def _exclusive_for(own: ChangeTimeline, other: ChangeTimeline,
                   audio: ChangeTimeline, user: str, cfg: MapperConfig) -> ExclusiveChangeList:
    used: set[int] = set()
    entries = []
    for imu_iv in own.changes:
        for j, a in enumerate(audio.changes):
            if j in used:
                continue
            widened = a.dilate(cfg.adjust_pre_ms, cfg.adjust_post_ms)
            if not widened.contains(imu_iv):
                continue
            if a.duration_ms < cfg.min_gap_ms:
                continue
            if any(o.intersects(widened) for o in other.changes):
                continue
            entries.append(ExclusiveChange(user, imu_iv, a.hull(imu_iv)))
            used.add(j)
            break
    return ExclusiveChangeList(user, tuple(entries))


def find_exclusive_changes(tl_m: ChangeTimeline, tl_n: ChangeTimeline,
                           tl_audio: ChangeTimeline, cfg: MapperConfig,
                           user_m: str = "m", user_n: str = "n",
                           ) -> tuple[ExclusiveChangeList, ExclusiveChangeList]:
    """Exclusive-change lists for both users against the shared audio timeline.

    Each audio change interval is consumed by at most one IMU change per user
    (earliest IMU change wins), so one long acoustic change cannot manufacture
    several votes.
    """
    e_m = _exclusive_for(tl_m, tl_n, tl_audio, user_m, cfg)
    e_n = _exclusive_for(tl_n, tl_m, tl_audio, user_n, cfg)
    return e_m, e_n


def gap_classify_window(e: ExclusiveChange, cfg: MapperConfig,
                        audio: AudioStream, horizon_ms: float) -> Interval | None:
    """Audio window to classify for one exclusive change: the gap proper.

    Uses [nu + pre, eta + post], padded symmetrically to at least one second,
    clipped to the padded acoustic context and the stream extent.
    """
    start = e.imu_interval.start_ms + cfg.adjust_pre_ms
    end = e.imu_interval.end_ms + cfg.adjust_post_ms
    if end - start < 1000.0:
        mid = 0.5 * (e.imu_interval.start_ms + e.imu_interval.end_ms)
        start, end = mid - 500.0, mid + 500.0
    context = e.audio_interval.dilate(cfg.context_pad_ms, cfg.context_pad_ms)
    start = max(start, context.start_ms, audio.t0_ms, 0.0)
    end = min(end, context.end_ms, audio.end_ms, horizon_ms)
    if end - start < 100.0:
        return None
    return Interval(start, end)


def _context_windows(e: ExclusiveChange, cfg: MapperConfig, audio: AudioStream,
                     horizon_ms: float) -> tuple[Interval | None, Interval | None]:
    """Acoustic context before and after the gap: [beta, nu+pre] and [eta+post, gamma]."""
    beta = max(e.audio_interval.start_ms - cfg.context_pad_ms, audio.t0_ms, 0.0)
    gamma = min(e.audio_interval.end_ms + cfg.context_pad_ms, audio.end_ms, horizon_ms)
    pre_end = e.imu_interval.start_ms + cfg.adjust_pre_ms
    post_start = e.imu_interval.end_ms + cfg.adjust_post_ms
    pre = Interval(beta, pre_end) if pre_end - beta >= 500.0 else None
    post = Interval(post_start, gamma) if gamma - post_start >= 500.0 else None
    return pre, post


def vote_activity_for_other(e_list: ExclusiveChangeList, backend: HarBackend,
                            audio: AudioStream, primary_set, cfg: MapperConfig,
                            horizon_ms: float | None = None) -> VoteResult:
    """Majority vote over gap-audio classifications; the result labels the other user.

    For each exclusive change the gap audio is classified, labels outside the
    primary set are discarded, and the remaining maximum-confidence label is
    this entry's vote. Two filters keep only informative entries: the winning
    label must clearly dominate the runner-up in-set label (a window where
    several primary activities sound comparably loud is not a clean gap), and
    a different in-set activity (the pausing user's own) must be audible in
    the acoustic context on both sides of the gap. Ties in the final tally
    break by higher summed confidence, then lexicographically.
    """
    primary_set = set(primary_set)
    if horizon_ms is None:
        horizon_ms = audio.end_ms
    ballots: list[tuple[ActivityLabel, float]] = []
    for e in e_list.entries:
        window = gap_classify_window(e, cfg, audio, horizon_ms)
        if window is None:
            continue
        pred = backend.classify(slice_audio(audio, window))
        in_set = [(lab, conf) for lab, conf in pred.labels if lab in primary_set]
        if not in_set:
            continue
        ranked = sorted(in_set, key=lambda p: (-p[1], p[0]))
        top_label, top_conf = ranked[0]
        if len(ranked) > 1 and top_conf < cfg.vote_dominance * ranked[1][1]:
            continue  # ambiguous evidence: other primary activity also heard
        if cfg.context_presence_min > 0.0 and not _context_supports(
                e, top_label, primary_set, backend, audio, horizon_ms, cfg):
            continue
        ballots.append((top_label, top_conf))
    if not ballots:
        return VoteResult(None, 0, 0)
    counts: dict[str, int] = defaultdict(int)
    conf_sum: dict[str, float] = defaultdict(float)
    for lab, conf in ballots:
        counts[lab] += 1
        conf_sum[lab] += conf
    winner = min(counts, key=lambda lab: (-counts[lab], -conf_sum[lab], lab))
    if counts[winner] < cfg.min_votes:
        # a single stray window is not enough evidence for an assignment
        return VoteResult(None, 0, len(ballots))
    return VoteResult(winner, counts[winner], len(ballots))


def _context_supports(e: ExclusiveChange, gap_label: ActivityLabel, primary_set,
                      backend: HarBackend, audio: AudioStream, horizon_ms: float,
                      cfg: MapperConfig) -> bool:
    """True when the pausing user's own activity is audible around the gap.

    During a genuine gap of user m, m's primary activity sounds both before
    and after the pause, so the context windows must contain some in-set label
    other than the one heard inside the gap. A window carved out of another
    user's long pause fails this: its context sounds exactly like its inside.
    """
    pre, post = _context_windows(e, cfg, audio, horizon_ms)
    if pre is None or post is None:
        return False
    for ctx in (pre, post):
        pred = backend.classify(slice_audio(audio, ctx))
        others = [
            conf for lab, conf in pred.labels
            if lab in primary_set and lab != gap_label and conf >= cfg.context_presence_min
        ]
        if not others:
            return False
    return True


def resolve(vote_for_n: VoteResult, vote_for_m: VoteResult,
            e_m: ExclusiveChangeList, e_n: ExclusiveChangeList,
            cfg: MapperConfig, primary_set=None) -> UserActivityMap:
    """Combine both directional votes into the final per-user mapping.

    vote_for_n was derived from e_m (user m's exclusive changes) and assigns a
    label to user n; symmetrically for vote_for_m. When both users would
    receive the same label, only the decision from the opportunistic user's
    list survives and that user's own label stays undecided (a count tie
    resolves nothing and is flagged as an unresolved conflict).
    """
    user_m, user_n = e_m.user, e_n.user
    if len(e_m) > len(e_n):
        opportunistic = user_m
    elif len(e_n) > len(e_m):
        opportunistic = user_n
    else:
        opportunistic = None

    assignments: dict[str, tuple[ActivityLabel, int, int]] = {}
    conflict = (
        vote_for_n.label is not None
        and vote_for_m.label is not None
        and vote_for_n.label == vote_for_m.label
    )
    if not conflict:
        if vote_for_n.label is not None:
            assignments[user_n] = (vote_for_n.label, vote_for_n.votes, vote_for_n.total)
        if vote_for_m.label is not None:
            assignments[user_m] = (vote_for_m.label, vote_for_m.votes, vote_for_m.total)
        return UserActivityMap(assignments, opportunistic, conflict=False,
                               conflict_resolved=False)

    if opportunistic is None:
        return UserActivityMap({}, None, conflict=True, conflict_resolved=False)
    if opportunistic == user_m:
        kept_user, kept = user_n, vote_for_n
    else:
        kept_user, kept = user_m, vote_for_m
    assignments[kept_user] = (kept.label, kept.votes, kept.total)
    if cfg.assign_by_elimination and primary_set is not None:
        remaining = set(primary_set) - {kept.label}
        if len(remaining) == 1:
            assignments[opportunistic] = (remaining.pop(), 0, 0)
    return UserActivityMap(assignments, opportunistic, conflict=True, conflict_resolved=True)


def mapping_report_dict(mapping: UserActivityMap,
                        exclusive: Mapping[str, ExclusiveChangeList]) -> dict:
    """JSON-ready mapping report matching the documented wire format."""
    users = {
        user: {"label": lab, "votes": votes, "total": total}
        for user, (lab, votes, total) in sorted(mapping.assignments.items())
    }
    changes = {
        user: [
            {
                "imu": [e.imu_interval.start_ms, e.imu_interval.end_ms],
                "audio": [e.audio_interval.start_ms, e.audio_interval.end_ms],
            }
            for e in lst.entries
        ]
        for user, lst in sorted(exclusive.items())
    }
    return {
        "users": users,
        "opportunistic": mapping.opportunistic_user,
        "conflict": mapping.conflict,
        "conflict_resolved": mapping.conflict_resolved,
        "exclusive_changes": changes,
    }
