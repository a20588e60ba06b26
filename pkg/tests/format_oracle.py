"""Reference oracle for the response-format grammar, kept independent of the
main implementation: a single regex plus tag-count asserts. Written before the
scanner in verirl.verifier and never refactored to share code with it."""

import re

_PATTERN = re.compile(
    r"\A<think>(?P<think>.*?)</think>(?P<gap>\s*)<answer>(?P<ans>.*?)</answer>\Z",
    re.DOTALL,
)


def oracle_format_score(response: str) -> int:
    text = response.strip()
    m = _PATTERN.match(text)
    if not m:
        return 0
    for tag in ("<think>", "</think>", "<answer>", "</answer>"):
        if text.count(tag) != 1:
            return 0
    return 1
