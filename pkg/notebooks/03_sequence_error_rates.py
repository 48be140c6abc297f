"""
Word error rate from an alignment
=================================

Sequence outputs are compared to the reference through a minimum edit
alignment. The error count is pooled over the whole set before dividing by
the total reference length, so long utterances weigh more.
"""

# %%
from evalkit import SequenceTrialSet
from evalkit.metrics import align, error_rate_sequences

a = align("the cat sat".split(), "the bat sat down".split())
print(f"hits {a.hits}, substitutions {a.substitutions}, deletions {a.deletions}, "
      f"insertions {a.insertions}")
for ref, hyp in a.pairs:
    print(f"  {ref or '-':>5} {hyp or '-':<5}")

# %%
refs = [["a", "b", "c"], ["a"], "how are you today".split()]
hyps = [["a", "x", "c"], ["a", "a"], "how you today".split()]
per_utt = [align(r, h).distance / len(r) for r, h in zip(refs, hyps)]
print("per-utterance rates", [f"{100 * x:.1f}%" for x in per_utt])

trials = SequenceTrialSet.build(["u1", "u2", "u3"], refs, hyps)
wer = error_rate_sequences(trials)
print(f"pooled WER {wer.value:.2f}%  (unweighted mean would be "
      f"{100 * sum(per_utt) / len(per_utt):.2f}%)")

# %%
# Character error rate is the same computation over characters.
chars = SequenceTrialSet.build(["c1"], [list("kitten")], [list("sitting")])
print(f"CER {error_rate_sequences(chars).value:.1f}%")
