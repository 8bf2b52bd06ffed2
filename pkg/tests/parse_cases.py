"""Shared table of completions for ``parse_choice``: (completion, expected or None for violation)."""

VALID = frozenset({"AAA", "BBB", "CCC", "HHH", "DDD", "Mark", "John Doe"})

CASES = [
    # the instruction dialogue: reasoning, then a tag, then a justification
    ("Some reasoning about the first task. I assign this task to <agent> Mark </agent> because ...", "Mark"),
    ("Mark failed, so I assign it to <agent> John Doe </agent> because ...", "John Doe"),
    ("Next task. I select <agent>John Doe</agent> because...", "John Doe"),
    ('wrap the name like "<agent> xxx </agent>"', None),
    # plain single tags
    ("<agent>AAA</agent>", "AAA"),
    ("<agent>BBB</agent> because it has the best ROI.", "BBB"),
    ("Reasoning first. <agent>CCC</agent>", "CCC"),
    ("**<agent>HHH</agent>**", "HHH"),
    ("`<agent>DDD</agent>`", "DDD"),
    ("Choice: (<agent>AAA</agent>)", "AAA"),
    # whitespace inside tags
    ("<agent> AAA</agent>", "AAA"),
    ("<agent>AAA </agent>", "AAA"),
    ("<agent>   BBB   </agent>", "BBB"),
    ("<agent>\nCCC\n</agent>", "CCC"),
    ("<agent>\tHHH\t</agent>", "HHH"),
    ("<agent>John   Doe</agent>", "John Doe"),
    ("<agent>John\nDoe</agent>", "John Doe"),
    ("<agent> \n DDD \n </agent>", "DDD"),
    # multiple tags, last wins
    ("<agent>AAA</agent> ... on reflection ... <agent>BBB</agent>", "BBB"),
    ("<agent>AAA</agent><agent>CCC</agent>", "CCC"),
    ("Not <agent>HHH</agent>, not <agent>DDD</agent>, but <agent>AAA</agent>.", "AAA"),
    ("<agent>BBB</agent>\n\nFinal answer: <agent> Mark </agent>", "Mark"),
    ("<agent>AAA</agent> then <agent>ZZZ</agent>", None),
    ("<agent>ZZZ</agent> then <agent>AAA</agent>", "AAA"),
    ("<agent></agent> <agent>CCC</agent>", "CCC"),
    ("<agent>CCC</agent> <agent></agent>", None),
    ("<agent>AAA</agent> and an unclosed <agent>BBB", "AAA"),
    ("<agent>BBB</agent> " + "filler " * 200 + "<agent>DDD</agent>", "DDD"),
    # no tag
    ("I pick AAA", None),
    ("", None),
    ("AAA", None),
    ("agent: BBB", None),
    ("<agent>AAA", None),
    ("AAA</agent>", None),
    ("</agent>AAA<agent>", None),
    ("[agent]AAA[/agent]", None),
    ("<agents>AAA</agents>", None),
    # tag present but not a valid member
    ("<agent></agent>", None),
    ("<agent>   </agent>", None),
    ("<agent>aaa</agent>", None),
    ("<AGENT>AAA</AGENT>", None),
    ("<agent>AAA.</agent>", None),
    ("<agent>'AAA'</agent>", None),
    ("<agent>AAA, BBB</agent>", None),
    ("<agent>member AAA</agent>", None),
    ("<agent>ZZZ</agent>", None),
    ("<agent><agent>AAA</agent></agent>", None),
    ("<agent>JohnDoe</agent>", None),
    # text around tags is ignored
    ("The <b>best</b> pick is <agent>HHH</agent>; <i>done</i>.", "HHH"),
    ("<agent>BBB</agent>" + " <agent" * 3, "BBB"),
]

assert len(CASES) == 50
