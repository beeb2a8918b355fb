"""Shared prompt fixtures: inputs only, expectations live in tests/golden/prompts/.

Each entry names a golden file and describes how to build the prompt. The
translation texts cover Latin, Cyrillic, and CJK scripts plus quoting and
emoji so the byte-level goldens exercise real UTF-8.
"""

from __future__ import annotations

CAR = {
    "id": "car",
    "text": "A red car.",
    "translations": {
        "de": "Ein rotes Auto.",
        "fr": "Une voiture rouge.",
        "ru": "Красная машина.",
        "zh": "一辆红色的汽车。",
    },
}

PARK = {
    "id": "park",
    "text": "Two dogs play in the park.",
    "translations": {
        "ru": "Две собаки играют в парке.",
        "es": "Dos perros juegan en el parque.",
        "de": "Zwei Hunde spielen im Park.",
        "fr": "Deux chiens jouent dans le parc.",
        "zh": "两只狗在公园里玩耍。",
        "it": "Due cani giocano nel parco.",
    },
}

SIGN = {
    "id": "sign",
    "text": 'A sign that says "hello".',
    "translations": {
        "fr": "Un panneau qui dit « bonjour ».",
        "de": 'Ein Schild mit der Aufschrift "Hallo".',
    },
}

CAT = {
    "id": "cat",
    "text": "A cat 🐱 on a mat.",
    "translations": {
        "de": "Eine Katze 🐱 auf einer Matte.",
        "ja": "マットの上の猫🐱。",
    },
}

# (golden name, kind, record, argument)
#   kind "order":         argument is the language order for render_prompt
#   kind "reduplication": argument is the duplicate count
#   kind "paraphrase":    argument is the paraphrase list
#   kind "single":        argument is one language code
RENDER_CASES = [
    ("car_de", "order", CAR, ["de"]),
    ("car_english_only", "order", CAR, []),
    ("car_fr_de", "order", CAR, ["fr", "de"]),
    ("car_ru", "order", CAR, ["ru"]),
    ("car_zh", "order", CAR, ["zh"]),
    ("park_all_six", "order", PARK, ["ru", "es", "de", "fr", "zh", "it"]),
    ("park_reversed", "order", PARK, ["it", "zh", "fr", "de", "es", "ru"]),
    ("sign_fr_de", "order", SIGN, ["fr", "de"]),
    ("cat_ja_de", "order", CAT, ["ja", "de"]),
    ("dog_reduplication_3", "reduplication", {"id": "dog", "text": "A dog."}, 3),
    ("dog_paraphrase_2", "paraphrase", {"id": "dog", "text": "A dog."}, ["A canine.", "One dog."]),
    ("park_single_zh", "single", PARK, "zh"),
]
