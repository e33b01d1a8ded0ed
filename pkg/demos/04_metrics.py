"""
BLEU-4 and ROUGE-L by hand
==========================
"""

import math

from mgsa import bleu4, rouge_l
from mgsa.metrics import BLEU_EPSILON

# three of three unigrams, two bigrams and one trigram match; there is no
# candidate 4-gram, so that precision falls back to a tiny constant
hand = 100 * math.exp(1 - 4 / 3) * BLEU_EPSILON ** 0.25
print(bleu4(["the cat sat"], [["the cat sat down"]]), hand)

# LCS of "a b c" and "a x c" is two tokens, so precision = recall = 2/3
print(rouge_l(["a b c"], [["a x c"]]))

# several references: BLEU clips against the best count, ROUGE keeps the best F1
refs = [["the cat sat on the mat", "a cat was on the mat"]]
print(bleu4(["the cat was on the mat"], refs), rouge_l(["the cat was on the mat"], refs))
