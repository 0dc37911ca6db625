"""Tour of the evaluation metrics on small hand-checkable examples."""

import math

from kgmoe import metrics as M


def main():
    print("sentence BLEU")
    print("  exact match                    ->",
          M.sentence_bleu("the cat sat", ["the cat sat"]))
    print("  candidate shorter than ref     ->",
          round(M.sentence_bleu("the cat sat", ["the cat sat down"], max_n=3), 3),
          f"(= 100 * exp(1 - 4/3) = {100 * math.exp(1 - 4 / 3):.3f}, brevity penalty only)")
    print("  no overlap                     ->", M.sentence_bleu("x y z", ["a b c"]))

    print("\nROUGE-L (longest common subsequence F1)")
    print("  'a b c d' vs 'a c d'           ->", round(M.rouge_l("a b c d", "a c d"), 3),
          "(LCS=3, precision 3/4, recall 1, F1 = 6/7)")

    print("\nSelf-BLEU (average pairwise BLEU among a model's own outputs)")
    print("  identical outputs              ->", M.self_bleu(["a b c"] * 3, 4))
    print("  disjoint outputs               ->", M.self_bleu(["a b", "c d", "e f"], 2))

    print("\nDistinct-2 (distinct bigrams / total bigrams, corpus pooled)")
    print("  duplicated sentence            ->", M.distinct_k(["a b c", "a b c"], 2))
    print("  all unique                     ->", M.distinct_k(["a b", "c d"], 2))

    print("\nEntropy-4 (natural-log entropy of the 4-gram distribution)")
    hyps = ["a b c d", "a b c d", "e f g h", "i j k l"]
    print("  counts {2,1,1}                 ->", round(M.entropy_k(hyps, 4), 4),
          "(= -0.5 ln 0.5 - 0.5 ln 0.25 = 1.0397)")

    print("\nconcept diversity over selected-concept sets")
    sets = [{"a", "b"}, {"b", "c"}, {"a", "b", "c"}]
    unic, jac = M.concept_diversity([sets])
    print("  unique concepts                ->", unic)
    print("  mean pairwise Jaccard          ->", round(jac, 4),
          "(= (1/3 + 2/3 + 2/3) / 3 = 5/9)")


if __name__ == "__main__":
    main()
