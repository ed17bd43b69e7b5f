"""Question/answer template bank, grouped by task family.

Template strings are kept exactly as published, including their spacing and
typos; the generator only substitutes placeholders and picks one side of
each ``a/b`` polarity pair.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

CATEGORIES = (
    "existence",
    "counting",
    "scale_estimation",
    "grounding",
    "relative_position",
    "absolute_distance",
    "scale_comparison",
    "reference_estimation",
)

PLACEHOLDER_RE = re.compile(r"\[([^\]]+)\]")
POLARITY_RE = re.compile(r"\b([A-Za-z]+)/([A-Za-z]+)\b")


@dataclass(frozen=True)
class TemplateFamily:
    name: str
    category: str
    questions: tuple[str, ...]
    answers: tuple[str, ...]
    quantitative: bool

    def placeholders(self, which: str = "answers") -> set[str]:
        found = set()
        for t in getattr(self, which):
            found.update(PLACEHOLDER_RE.findall(t))
        return found


def _fam(name, category, questions, answers, quantitative):
    return TemplateFamily(name, category, tuple(questions), tuple(answers), quantitative)


# Scale Estimation
size_template_questions = ["What is the size of [A]?", "How big is [A]?", "Can you provide the size measurement of [A] ?"]
size_template_answers = ["The size of [A] is [Length] x [Width] x [Height]. ", "[A] is with the length of [Length], width of [Width], and height of [Height]."]

height_template_questions = ["What is the height of [A]?", "How tall is [A]?", "Can you measure the height of [A] ?"]
height_template_answers = ["The height of [A] is [Height].", "[A] is with the height of [Height].", "[A] measures [Height] in height."]

width_template_questions = ["What is the width of [A]?", "Determine the width of [A].", "Can you measure the width of [A] ?"]
width_template_answers = ["The width  of [A] is [Width].", "[A] is with the width of [Width].", "[A] measures [Width] in width."]

# Counting
count_template_questions = ["How many [A]s are there in the image ?", "what's the total number of [A]s in the image?"]
count_template_answers = ["There are [X] [A]s.", "There are [X] [A]s in the image.", "[X]."]

# Grounding
position1_template_questions = ["What object is located at ([x],[y])?", "What can you find at ([x],[y])?", "What object does the position ([x],[y]) belong to?"]
position1_template_answers = ["It is [A].", "That is [A].", "[A]."]
position2_template_questions = ["What is the coordinate of [A] ?"]
position2_template_answers = ["([x],[y]).", "It is located at ([x],[y]) in the image."]

# Existence
zero_template_questions = ["What is the size of [A]?", "How big is [A]?", "Can you provide the size measurement of [A] ?", "What is the height of [A]?", "How tall is [A]?", "Where is [A]?",
                           "How many [A]s are there in the image ?", "what's the total number of [A]s in the image?"]
zero_template_answers = ["There is no [A] in the image", "Can not find [A].", "No [A] in the scene."]

# Absolute Distance
distance_template_questions = ["What is the distance between [A] and [B]?", "How far away is [A] from [B]?", "Can you provide the distance measurement between [A] and [B]?"]
distance_template_answers = ["[A] and [B] are [X] apart.", "A distance of [X] exists between [A] and [B].", "[A] and [B] are [X] apart from each other.", "The distance is [X]."]

# Relative Position
left_template_questions = ["Is [A] to the left/right of [B] from the viewer's perspective?", "Does [A] appears on the left/right side of [B]?", "Can you confirm if [A] is positioned to the left/right of [B]?"]
left_template_answers = ["Yes, [A] is to the left/right of [B].", "Indeed, [A] is positioned on the left/right side of [B]."]

closer_template_questions = ["From the viewer's perspective, what is closer, [A] or [B] ?"]
closer_template_answers = ["[X] is more closer."]

stands_template_questions = ["Which stands higher/lower in the image, [A] or [B] ?"]
stands_template_answers = ["[X] stands higher/lower."]

# Scale Comparison
taller_template_questions = ["Between [A] and [B], which one is taller/lower?", "Which one is taller/lower, [A] or [B]? "]
taller_template_answers = ["The height of [A] is [Height A] and [B] is [Height B], so [X] is taller/lower."]

tallest_template_questions = ["What is tallest/lowest among [A], [B], and [C]?"]
tallest_template_answers = ["The  height of [A] is [Height A], height of [B] is [Height B], and height of [C] is [Height C], so the  tallest is [X]."]

larger_template_questions = ["Between [A] and [B], which one is larger/smaller?", "Which one is larger/smaller, [A] or [B]? "]
larger_template_answers = ["The size of [A] is [Length A] x [Width A] x [Height A] and [B] is [Length B] x [Width B] x [Height B], so [X] is larger/smaller."]

# Reference Object Estimation: two objects
refer1_template_questions = ["The height of [A] is [Height A], can you measure the height of [B]?"]
refer1_template_answers = ["Since the height of [A] is [Height A], i think [B] is [Height B] in height."]

refer2_template_questions = ["The width of [A] is [Width A], can you measure the width of [B]?"]
refer2_template_answers = ["Since the width of [A] is [Width A], i think the width of [B] is [Width B]"]

refer3_template_questions = ["The height of [A] is [Height A], can you measure the size of [B]?"]
refer3_template_answers = ["Since the height of [A] is [Height A], i think the size of [B] is [Length B] x [Width B] x [Height B]."]

# Reference Object Estimation: three objects
refer4_three_template_questions = ["The height of [A] is [Height A], what is the height of [B] and [C] ?"]
refer4_three_template_answers = ["Since the height of [A] is [Height A], i think the height of [B] is [Height B] and the height of [C] is [Height C]."]

refer5_three_template_questions = ["The distance between [A] and [B] is [dis A2B], what is the distance between [B] and [C] ?"]
refer5_three_template_answers = ["Since the distance between [A] and [B] is [dis A2B], i think the distance between [B] and [C] is [dis B2C]."]


FAMILIES: dict[str, TemplateFamily] = {
    f.name: f
    for f in (
        _fam("size", "scale_estimation", size_template_questions, size_template_answers, True),
        _fam("height", "scale_estimation", height_template_questions, height_template_answers, True),
        _fam("width", "scale_estimation", width_template_questions, width_template_answers, True),
        _fam("count", "counting", count_template_questions, count_template_answers, True),
        _fam("position1", "grounding", position1_template_questions, position1_template_answers, False),
        _fam("position2", "grounding", position2_template_questions, position2_template_answers, True),
        _fam("zero", "existence", zero_template_questions, zero_template_answers, False),
        _fam("distance", "absolute_distance", distance_template_questions, distance_template_answers, True),
        _fam("left", "relative_position", left_template_questions, left_template_answers, False),
        _fam("closer", "relative_position", closer_template_questions, closer_template_answers, False),
        _fam("stands", "relative_position", stands_template_questions, stands_template_answers, False),
        _fam("taller", "scale_comparison", taller_template_questions, taller_template_answers, False),
        _fam("tallest", "scale_comparison", tallest_template_questions, tallest_template_answers, False),
        _fam("larger", "scale_comparison", larger_template_questions, larger_template_answers, False),
        _fam("refer1", "reference_estimation", refer1_template_questions, refer1_template_answers, True),
        _fam("refer2", "reference_estimation", refer2_template_questions, refer2_template_answers, True),
        _fam("refer3", "reference_estimation", refer3_template_questions, refer3_template_answers, True),
        _fam("refer4", "reference_estimation", refer4_three_template_questions, refer4_three_template_answers, True),
        _fam("refer5", "reference_estimation", refer5_three_template_questions, refer5_three_template_answers, True),
    )
}


def pick_polarity(text: str, polarity: int) -> str:
    """Resolve every ``a/b`` pair to its ``polarity``-th side (0 or 1)."""
    return POLARITY_RE.sub(lambda m: m.group(1 + polarity), text)


def substitute(text: str, values: dict[str, str]) -> str:
    def repl(m: re.Match) -> str:
        key = m.group(1)
        if key not in values:
            raise KeyError(f"no value for placeholder [{key}] in {text!r}")
        return values[key]

    return PLACEHOLDER_RE.sub(repl, text)


def placeholder_order(text: str) -> list[str]:
    return PLACEHOLDER_RE.findall(text)
