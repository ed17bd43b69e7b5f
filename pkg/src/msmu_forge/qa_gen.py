"""Instantiate the template bank for one view with exact numeric ground truth."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Iterator

import numpy as np

from .ingest import CameraView
from .projection import InstanceMask
from .scene_graph import TIE_EPSILON, ObjectInstance, Ordering, SceneGraph, compare_scalar, extreme_of, object_distance
from .selection import SelectedObject
from .templates import CATEGORIES, FAMILIES, TemplateFamily, pick_polarity, placeholder_order, substitute

ABSENT = "__absent__"

# common indoor categories used to draw absent objects for existence questions
DEFAULT_VOCABULARY = (
    "bathtub", "bed", "bench", "bicycle", "blanket", "bookshelf", "bottle", "box", "bucket", "cabinet",
    "chair", "clock", "computer tower", "couch", "counter", "cup", "curtain", "desk", "dresser", "fan",
    "guitar", "keyboard", "lamp", "laptop", "microwave", "mirror", "monitor", "nightstand", "ottoman",
    "piano", "picture", "pillow", "plant", "printer", "refrigerator", "shelf", "shoe", "sink", "sofa",
    "stool", "suitcase", "table", "toilet", "towel", "trash can", "tv", "umbrella", "vase", "washing machine",
)


@dataclass(frozen=True)
class QaGenConfig:
    per_view_cap: int = 40
    distance_mode: str = "centroid"
    tie_epsilon: float = TIE_EPSILON
    position_tie_px: float = 5.0
    existence_per_view: int = 2
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY


@dataclass(frozen=True)
class Numeric:
    name: str  # placeholder, e.g. "Height B"
    kind: str  # length | width | height | distance | count | u | v
    value: float  # unrounded
    unit: str  # m | count | px
    objects: tuple[int, ...]
    role: str = "answer"  # "given" when the value is also stated in the question

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objects"] = list(self.objects)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Numeric":
        return cls(d["name"], d["kind"], float(d["value"]), d["unit"], tuple(d["objects"]), d.get("role", "answer"))


@dataclass(frozen=True)
class QaPair:
    qa_id: str
    scene_id: str
    view_id: str
    category: str
    family: str
    question: str
    answer: str
    objects: tuple[int, ...]
    numerics: tuple[Numeric, ...]
    is_quantitative: bool
    decisive: str | None = None  # keyword a qualitative answer hinges on

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if FAMILIES[self.family].category != self.category:
            raise ValueError(f"family {self.family} does not belong to {self.category}")

    def truth_values(self) -> list[float]:
        return [n.value for n in self.numerics if n.role == "answer"]

    def to_dict(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "scene_id": self.scene_id,
            "view_id": self.view_id,
            "category": self.category,
            "family": self.family,
            "question": self.question,
            "answer": self.answer,
            "objects": list(self.objects),
            "numerics": [n.to_dict() for n in self.numerics],
            "is_quantitative": self.is_quantitative,
            "decisive": self.decisive,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QaPair":
        return cls(
            qa_id=d["qa_id"],
            scene_id=d["scene_id"],
            view_id=d["view_id"],
            category=d["category"],
            family=d["family"],
            question=d["question"],
            answer=d["answer"],
            objects=tuple(d["objects"]),
            numerics=tuple(Numeric.from_dict(n) for n in d["numerics"]),
            is_quantitative=bool(d["is_quantitative"]),
            decisive=d.get("decisive"),
        )


def format_length(x: float) -> str:
    """Two decimals, rounded half up, with the unit: 0.8123 -> '0.81 m'."""
    if not (math.isfinite(x) and x >= 0):
        raise ValueError(f"length must be finite and >= 0, got {x}")
    return f"{Decimal(repr(float(x))).quantize(Decimal('0.01'), rounding=ROUND_HALF_UP)} m"


def _cap_first(s: str) -> str:
    s = s.strip()
    return s[:1].upper() + s[1:]


# placeholder -> (numeric kind, which object slot, unit)
_NUMERIC_SLOTS = {
    "Length": ("length", "A", "m"),
    "Width": ("width", "A", "m"),
    "Height": ("height", "A", "m"),
    "Length A": ("length", "A", "m"),
    "Width A": ("width", "A", "m"),
    "Height A": ("height", "A", "m"),
    "Length B": ("length", "B", "m"),
    "Width B": ("width", "B", "m"),
    "Height B": ("height", "B", "m"),
    "Height C": ("height", "C", "m"),
    "dis A2B": ("distance", "AB", "m"),
    "dis B2C": ("distance", "BC", "m"),
    "x": ("u", "A", "px"),
    "y": ("v", "A", "px"),
}


def derive_seed(global_seed: int, *parts: str) -> int:
    h = hashlib.sha256(json.dumps([int(global_seed), *parts]).encode()).digest()
    return int.from_bytes(h[:8], "little")


class _ViewGen:
    def __init__(self, graph, selected, mask, view, cfg, rng, visible_categories, excluded):
        self.graph = graph
        self.sel = selected
        self.mask = mask
        self.view = view
        self.cfg = cfg
        self.rng = rng
        # category of every instance with at least one pixel, selected or not
        self.visible_categories = list(visible_categories)
        self.excluded = {c.lower() for c in excluded}
        self.items: list[dict] = []

    def obj(self, s: SelectedObject) -> ObjectInstance:
        return self.graph[s.instance_id]

    def dist(self, a: SelectedObject, b: SelectedObject) -> float:
        return object_distance(self.obj(a), self.obj(b), self.cfg.distance_mode)

    def choose(self, n: int) -> int:
        return int(self.rng.integers(n))

    def emit(self, family: str, slots: dict[str, SelectedObject], text: dict[str, str], numbers: dict[str, tuple], polarity: int = 0, decisive=None, objects=None, q_text=None, a_text=None):
        """Render one QA pair.

        ``numbers`` maps numeric placeholders to (value, formatted, objects).
        ``text`` maps label placeholders to their strings.
        """
        fam: TemplateFamily = FAMILIES[family]
        q_t = fam.questions[self.choose(len(fam.questions))]
        a_t = fam.answers[self.choose(len(fam.answers))]
        q_t = pick_polarity(q_t, polarity)
        a_t = pick_polarity(a_t, polarity)
        if family == "tallest" and polarity == 1:
            a_t = a_t.replace("tallest", "lowest")
        q_vals = dict(text if q_text is None else q_text)
        a_vals = dict(text if a_text is None else a_text)
        for key, (_, formatted, _) in numbers.items():
            q_vals.setdefault(key, formatted)
            a_vals.setdefault(key, formatted)
        question = _cap_first(substitute(q_t, q_vals))
        answer = _cap_first(substitute(a_t, a_vals))
        q_keys = set(placeholder_order(q_t))
        numerics = []
        for key in placeholder_order(a_t):
            if key in numbers:
                value, _, objs = numbers[key]
                kind, unit = _numeric_kind(key, family)
                numerics.append(Numeric(key, kind, float(value), unit, tuple(objs), "given" if key in q_keys else "answer"))
        if objects is None:
            objects = tuple(s.instance_id for s in slots.values())
        self.items.append(
            {
                "category": fam.category,
                "family": family,
                "question": question,
                "answer": answer,
                "objects": tuple(objects),
                "numerics": tuple(numerics),
                "is_quantitative": fam.quantitative,
                "decisive": decisive,
            }
        )

    # -- per category ------------------------------------------------------

    def scale(self) -> None:
        for s in self.sel:
            o = self.obj(s)
            L = (o.length, format_length(o.length), (s.instance_id,))
            W = (o.width, format_length(o.width), (s.instance_id,))
            Hh = (o.height, format_length(o.height), (s.instance_id,))
            lab = {"A": s.display_label}
            self.emit("size", {"A": s}, lab, {"Length": L, "Width": W, "Height": Hh})
            self.emit("height", {"A": s}, lab, {"Height": Hh})
            self.emit("width", {"A": s}, lab, {"Width": W})

    def grounding(self) -> None:
        for s in self.sel:
            x, y = int(s.grounding_uv[0]), int(s.grounding_uv[1])
            nums = {"x": (x, str(x), (s.instance_id,)), "y": (y, str(y), (s.instance_id,))}
            lab = {"A": s.display_label}
            # only ask "what is at (x, y)" when that pixel actually belongs to the object
            if 0 <= y < self.mask.shape[0] and 0 <= x < self.mask.shape[1] and self.mask.grid[y, x] == s.instance_id:
                self.emit("position1", {"A": s}, lab, nums, decisive=s.display_label)
            self.emit("position2", {"A": s}, lab, nums)

    def counting(self) -> None:
        by_cat: dict[str, list[SelectedObject]] = {}
        for s in self.sel:
            by_cat.setdefault(s.category, []).append(s)
        visible = Counter(self.visible_categories)
        for cat in sorted(by_cat):
            group = by_cat[cat]
            if len(group) < 2 or visible[cat] != len(group):
                continue
            n = len(group)
            ids = tuple(sorted(s.instance_id for s in group))
            self.emit("count", {}, {"A": cat}, {"X": (n, str(n), ids)}, objects=ids)

    def existence(self) -> None:
        excluded = {c.lower() for c in self.visible_categories} | self.excluded
        pool = sorted({v for v in self.cfg.vocabulary if v.lower() not in excluded} | {
            c for c in self.graph.categories() if c.lower() not in excluded
        })
        if not pool:
            return
        k = min(self.cfg.existence_per_view, len(pool))
        picks = self.rng.choice(len(pool), size=k, replace=False)
        for i in sorted(int(p) for p in picks):
            cat = pool[i]
            fam = FAMILIES["zero"]
            qi = self.choose(len(fam.questions))
            q_t = fam.questions[qi]
            q_val = cat if "[A]s" in q_t else f"the {cat}"
            # render directly; question wording depends on the chosen template
            ai = self.choose(len(fam.answers))
            self.items.append(
                {
                    "category": "existence",
                    "family": "zero",
                    "question": _cap_first(substitute(q_t, {"A": q_val})),
                    "answer": _cap_first(substitute(fam.answers[ai], {"A": cat})),
                    "objects": (),
                    "numerics": (),
                    "is_quantitative": False,
                    "decisive": ABSENT,
                }
            )

    def pairs(self) -> Iterator[tuple[SelectedObject, SelectedObject]]:
        for a, b in itertools.combinations(self.sel, 2):
            if self.choose(2):
                a, b = b, a
            yield a, b

    def absolute_distance(self) -> None:
        for a, b in self.pairs():
            d = self.dist(a, b)
            ids = (a.instance_id, b.instance_id)
            self.emit("distance", {"A": a, "B": b}, {"A": a.display_label, "B": b.display_label}, {"X": (d, format_length(d), ids)})

    def relative_position(self) -> None:
        for a, b in self.pairs():
            lab = {"A": a.display_label, "B": b.display_label}
            side = left_or_right(self.obj(a), self.obj(b), self.view, self.cfg.position_tie_px)
            if side is not None:
                self.emit("left", {"A": a, "B": b}, lab, {}, polarity=0 if side == "left" else 1, decisive=side)
            near = closer_of(self.obj(a), self.obj(b), self.view, self.cfg.tie_epsilon)
            if near is not None:
                winner = a if near == 0 else b
                self.emit("closer", {"A": a, "B": b}, lab, {}, decisive=winner.display_label,
                          a_text={**lab, "X": winner.display_label})
            hi = higher_in_image(a, b, self.mask, self.cfg.position_tie_px)
            if hi is not None:
                pol = self.choose(2)  # 0 asks "higher", 1 asks "lower"
                winner = (a if hi == 0 else b) if pol == 0 else (b if hi == 0 else a)
                self.emit("stands", {"A": a, "B": b}, lab, {}, polarity=pol, decisive=winner.display_label,
                          a_text={**lab, "X": winner.display_label})

    def scale_comparison(self) -> None:
        eps = self.cfg.tie_epsilon
        for a, b in self.pairs():
            oa, ob = self.obj(a), self.obj(b)
            lab = {"A": a.display_label, "B": b.display_label}
            by_height = compare_scalar(oa, ob, "height", eps)
            if by_height is not Ordering.TIE:
                pol = self.choose(2)
                taller = a if by_height is Ordering.FIRST else b
                winner = taller if pol == 0 else (b if taller is a else a)
                nums = {
                    "Height A": (oa.height, format_length(oa.height), (a.instance_id,)),
                    "Height B": (ob.height, format_length(ob.height), (b.instance_id,)),
                }
                self.emit("taller", {"A": a, "B": b}, lab, nums, polarity=pol, decisive=winner.display_label,
                          a_text={**lab, "X": winner.display_label})
            by_volume = compare_scalar(oa, ob, "volume", eps)
            if by_volume is not Ordering.TIE:
                pol = self.choose(2)
                larger = a if by_volume is Ordering.FIRST else b
                winner = larger if pol == 0 else (b if larger is a else a)
                nums = {}
                for slot, o, s in (("A", oa, a), ("B", ob, b)):
                    for kind, val in (("Length", o.length), ("Width", o.width), ("Height", o.height)):
                        nums[f"{kind} {slot}"] = (val, format_length(val), (s.instance_id,))
                self.emit("larger", {"A": a, "B": b}, lab, nums, polarity=pol, decisive=winner.display_label,
                          a_text={**lab, "X": winner.display_label})
        for trio in itertools.combinations(self.sel, 3):
            pol = self.choose(2)
            objs = [self.obj(s) for s in trio]
            ext = extreme_of(objs, "height", largest=(pol == 0), tie_epsilon=eps)
            if ext is None:
                continue
            winner = trio[objs.index(ext)]
            lab = {"A": trio[0].display_label, "B": trio[1].display_label, "C": trio[2].display_label}
            nums = {
                f"Height {slot}": (o.height, format_length(o.height), (s.instance_id,))
                for slot, o, s in zip("ABC", objs, trio)
            }
            self.emit("tallest", dict(zip("ABC", trio)), lab, nums, polarity=pol, decisive=winner.display_label,
                      a_text={**lab, "X": winner.display_label})

    def reference_estimation(self) -> None:
        if len(self.sel) < 2:
            return
        ref = self.sel[self.choose(len(self.sel))]
        oa = self.obj(ref)
        others = [s for s in self.sel if s.instance_id != ref.instance_id]
        hA = (oa.height, format_length(oa.height), (ref.instance_id,))
        wA = (oa.width, format_length(oa.width), (ref.instance_id,))
        for b in others:
            ob = self.obj(b)
            lab = {"A": ref.display_label, "B": b.display_label}
            hB = (ob.height, format_length(ob.height), (b.instance_id,))
            wB = (ob.width, format_length(ob.width), (b.instance_id,))
            lB = (ob.length, format_length(ob.length), (b.instance_id,))
            self.emit("refer1", {"A": ref, "B": b}, lab, {"Height A": hA, "Height B": hB})
            self.emit("refer2", {"A": ref, "B": b}, lab, {"Width A": wA, "Width B": wB})
            self.emit("refer3", {"A": ref, "B": b}, lab, {"Height A": hA, "Length B": lB, "Width B": wB, "Height B": hB})
        for b, c in itertools.combinations(others, 2):
            ob, oc = self.obj(b), self.obj(c)
            lab = {"A": ref.display_label, "B": b.display_label, "C": c.display_label}
            self.emit("refer4", {"A": ref, "B": b, "C": c}, lab, {
                "Height A": hA,
                "Height B": (ob.height, format_length(ob.height), (b.instance_id,)),
                "Height C": (oc.height, format_length(oc.height), (c.instance_id,)),
            })
            dab = self.dist(ref, b)
            dbc = self.dist(b, c)
            self.emit("refer5", {"A": ref, "B": b, "C": c}, lab, {
                "dis A2B": (dab, format_length(dab), (ref.instance_id, b.instance_id)),
                "dis B2C": (dbc, format_length(dbc), (b.instance_id, c.instance_id)),
            })


def _numeric_kind(key: str, family: str) -> tuple[str, str]:
    if key == "X":
        return ("count", "count") if family == "count" else ("distance", "m")
    kind, _, unit = _NUMERIC_SLOTS[key]
    return kind, unit


def left_or_right(a: ObjectInstance, b: ObjectInstance, view: CameraView, tie_px: float) -> str | None:
    """'left' when a's projected centroid has the smaller u; None when too close or behind the camera."""
    ca = view.world_to_camera(np.asarray([a.centroid, b.centroid]))
    if np.any(ca[:, 2] <= 0):
        return None
    k = view.intrinsics
    ua = k.fx * ca[0, 0] / ca[0, 2] + k.cx
    ub = k.fx * ca[1, 0] / ca[1, 2] + k.cx
    if abs(ua - ub) < tie_px:
        return None
    return "left" if ua < ub else "right"


def closer_of(a: ObjectInstance, b: ObjectInstance, view: CameraView, tie_epsilon: float) -> int | None:
    """0 if a is nearer the camera (smaller camera-frame Z), 1 if b, None on a tie."""
    z = view.world_to_camera(np.asarray([a.centroid, b.centroid]))[:, 2]
    if abs(z[0] - z[1]) < tie_epsilon:
        return None
    return 0 if z[0] < z[1] else 1


def higher_in_image(a: SelectedObject, b: SelectedObject, mask: InstanceMask, tie_px: float) -> int | None:
    """0 if a stands higher in the image (smaller mask-centroid v), 1 if b."""
    va = mask.stats[a.instance_id].centroid_uv[1]
    vb = mask.stats[b.instance_id].centroid_uv[1]
    if abs(va - vb) < tie_px:
        return None
    return 0 if va < vb else 1


def _proportional_quota(counts: dict[str, int], cap: int) -> dict[str, int]:
    total = sum(counts.values())
    if total <= cap:
        return dict(counts)
    nonempty = [c for c in CATEGORIES if counts.get(c, 0) > 0]
    quota = {c: 0 for c in counts}
    budget = cap
    if cap >= len(nonempty):
        for c in nonempty:
            quota[c] = 1
        budget -= len(nonempty)
    rest = {c: counts[c] - quota[c] for c in nonempty}
    rest_total = sum(rest.values())
    shares = {c: budget * rest[c] / rest_total for c in nonempty} if rest_total else {}
    for c in nonempty:
        quota[c] += min(rest[c], int(math.floor(shares.get(c, 0.0))))
    left = cap - sum(quota.values())
    order = sorted(nonempty, key=lambda c: (-(shares.get(c, 0.0) - math.floor(shares.get(c, 0.0))), CATEGORIES.index(c)))
    while left > 0:
        progressed = False
        for c in order:
            if left and quota[c] < counts[c]:
                quota[c] += 1
                left -= 1
                progressed = True
        if not progressed:
            break
    return quota


def generate_for_view(
    graph: SceneGraph,
    selected: list[SelectedObject],
    mask: InstanceMask,
    view: CameraView,
    cfg: QaGenConfig | None = None,
    rng_seed: int = 0,
    excluded_categories: Iterable[str] = (),
) -> list[QaPair]:
    """All QA pairs for one view, capped at ``cfg.per_view_cap`` proportionally per category."""
    cfg = cfg or QaGenConfig()
    if not selected:
        return []
    rng = np.random.default_rng(derive_seed(rng_seed, graph.scene_id, view.view_id))
    cat_of = {o.instance_id: o.category for o in graph.objects}
    cat_of.update({d.instance_id: d.category for d in graph.dropped})
    visible_cats = [cat_of[i] for i in mask.visible_ids() if i in cat_of]

    g = _ViewGen(graph, list(selected), mask, view, cfg, rng, visible_cats, excluded_categories)
    g.scale()
    g.counting()
    g.grounding()
    g.existence()
    g.absolute_distance()
    g.relative_position()
    g.scale_comparison()
    g.reference_estimation()

    by_cat: dict[str, list[dict]] = {c: [] for c in CATEGORIES}
    for it in g.items:
        by_cat[it["category"]].append(it)
    quota = _proportional_quota({c: len(v) for c, v in by_cat.items()}, cfg.per_view_cap)
    chosen = []
    for c in CATEGORIES:
        items = by_cat[c]
        q = quota.get(c, 0)
        if q < len(items):
            keep = sorted(int(i) for i in rng.choice(len(items), size=q, replace=False))
            items = [items[i] for i in keep]
        chosen.extend(items)
    return [
        QaPair(qa_id=f"{graph.scene_id}/{view.view_id}/{i:03d}", scene_id=graph.scene_id, view_id=view.view_id, **it)
        for i, it in enumerate(chosen)
    ]


def write_jsonl(pairs: Iterable[QaPair | dict], path: str | os.PathLike, header: dict | None = None) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(json.dumps({"__header__": header}, sort_keys=True) + "\n")
        for p in pairs:
            d = p.to_dict() if hasattr(p, "to_dict") else p
            fh.write(json.dumps(d, sort_keys=True, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jsonl(path: str | os.PathLike) -> Iterator[dict]:
    """Records of a JSONL file, skipping an optional header line."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            if "__header__" in d:
                continue
            yield d


def read_corpus(path: str | os.PathLike) -> list[QaPair]:
    return [QaPair.from_dict(d) for d in read_jsonl(path)]


def category_counts(pairs: Iterable[QaPair]) -> dict[str, int]:
    c = Counter(p.category for p in pairs)
    return {cat: c.get(cat, 0) for cat in CATEGORIES}


def format_stats_table(counts: dict[str, int]) -> str:
    total = sum(counts.values())
    width = max(len(c) for c in CATEGORIES)
    lines = [f"{'category':<{width}}  {'count':>7}  {'share':>7}"]
    for c in CATEGORIES:
        n = counts.get(c, 0)
        share = 100.0 * n / total if total else 0.0
        lines.append(f"{c:<{width}}  {n:>7d}  {share:>6.2f}%")
    lines.append(f"{'total':<{width}}  {total:>7d}")
    return "\n".join(lines)
