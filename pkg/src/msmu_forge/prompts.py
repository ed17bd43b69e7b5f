"""Prompt texts sent to the relabel, CoT generator/judge and scoring models.

Placeholders in square brackets are substituted with ``fill``.
"""

DISAMBIGUATION_PROMPT = """Describe the object class in the image and directly return a term. For example, the red car, the wooden table, the man in white.

Output: """

COT_GENERATION_PROMPT = """Please help me rephrase the following VQA (Visual Question Answering) pairs to improve their rationale. I will give you an image which shows an indoor environment and contains various objects. Based on the image, I will also give you a question and answer,
the question containing a reference object.  You need to propose a robust step-by-step plan to answer the question by using the reference scales and the information from the image.

For example:

Q: The height of the chair is 0.7 m, can you measure the height of the wooden table?

A: Since the height of the chair is 0.7 m, I think the height of the wooden table is 1.4 m

Example Output:

To determine the height of the table. I should think it step by step carefully. Firstly, the
chair height can be used as reference, which is known as 0.7 m. The wooden table
appears to be about double the height of the counter. So,
the height of the wooden table is 1.4 m.

Please process the following VQA pairs in the same way:

Q: [Q]

A: [A].

Output: """

COT_JUDGE_PROMPT = """Please help me evaluate the factual consistency and logical coherence between the original VQA pairs and the generated ones. The goal is to ensure that the generated answers align with the original facts and maintain logical reasoning.

Task:

Compare the original VQA pair with the generated one.

Check for factual consistency: Ensure that the generated answer does not contradict the original facts.

Check for logical coherence: Ensure that the generated answer and its reasoning (if provided) are logically sound and aligned with the original context.

Finally give a score between 0 and 10, where 0 indicates a poor match and 10 indicates a perfect match.

Input:

Original VQA Pair:

Q: [Original Question]

A: [Original Answer]

Generated VQA Pair:

Q: [Generated Question]

A: [Generated Answer]

The output should follow the format:

Factual Consistency: [Yes/No]

Logical Coherence: [Yes/No]

Score: [Score].
An example of output is

Factual Consistency: Yes,

Logical Coherence: Yes,

Score: 10.

Now return your output: """

EXTRACTION_PROMPT = """You should help me to evaluate the response given the question and the correct answer.
You need to convert the measurement of the correct answer and response to meters. The conversion factors are as follows: 1 inch = 0.0254 meters. 1 foot = 0.3048 meters. 1 centimeter (cm) = 0.01 meters.
You should output two floats in meters, one for the answer, and one for the response. If the answer or response contains more than one number for prediction, you should output the List that contains the numbers.
The output should be in JSON format.

Example 1:

Question: How tall is the long brown table opposite the crossed table?

Answer: The height of the long brown table opposite the crossed table is 1.02 m.

Response: It is 2.17 meters wide.

"answer_in_meters": 1.02, "response_in_meters": 2.17

Example 2:

Question: what's the total number of chairs in the image?

Answer: 2.

Response: There are 2 chairs.

"answer_in_meters": 2,"response_in_meters": 2

Example 3:

Question: What is the size of the dark pillow?

Answer: The dark pillow is with the size of 0.8 m x 0.63 m x 0.55 m

Response: It is 35.9 inches wide.

"answer_in_meters": [0.78,0.63,0.55], "response_in_meters": 0.91

Example 4:

Question: The height of the bed is 0.81 m, what is the height of the table and nightstand?

Answer: Since the height of the bed is 0.81 m, i think the height of the table is 1.02 meters and the height of the nightstand is 0.93 meters.

Response: Since the height of the bed is 0.81 m, i think the height of the table is 1.36 meters and the height of the nightstand is 0.77 meters.

"answer_in_meters": [1.02,0.93], "response_in_meters":[1.36,0.77]

Your Turn:

Question: [Question]

Answer: [Answer]

Response: [Pred] """

QUALITATIVE_PROMPT = """You should help me to evaluate the response given the question and the correct answer.
To mark a response, you should output a single integer between 0 and 1.
1 means that the response perfectly matches the answer.
0 means that the response is completely different from the answer.
The output should be in JSON format.

Example 1:

Question: Is the blue bed to the left of the curtain from the viewer's perspective?

Answer: Indeed, the bed is to the left of the curtain.

Response: Yes, the blue bed is positioned on the left side of the curtain.

"your_mark": 1

Example 2:

Question: Between the wooden table and the black chair, which on is taller?

Answer: The wooden table is taller.

Response: The chair.

"your_mark": 0

Example 3:

Question: What is the tallest among the table, the chair, and the curtain?

Answer: The tallest is the curtain.

Response: The curtain.

"your_mark": 1

Your Turn:

Question: [Question]

Answer: [Answer]

Response: [Response]"""

QSPATIAL_SYSTEM_PROMPT = """You will be provided with a question and a 2D image.

The question involves measuring the precise distance in 3D space through a 2D image.

You will answer the question by providing a numerical answer.

For example:

Question: What is the distance between the two chairs?

Answer: The minimum distance between the two speckled pattern stool chairs is 1 meter."""


def fill(template: str, **values: str) -> str:
    """Replace ``[Key]`` placeholders; keys use underscores for spaces."""
    out = template
    for key, val in values.items():
        out = out.replace(f"[{key.replace('_', ' ')}]", val)
    return out
