"""Compare GA results against brute-force enumeration on a tiny prompt space.

Four single-word pool entries, length cap 2, no verbalizer. Every template of
at most two words under all 24 segment orders is scored and the GA's best is
checked against the global optimum.

Example:
    python3 scripts/exhaustive_check.py --seeds 100
"""

import argparse
import itertools

from promptevo.engine import EvolutionConfig, evolve
from promptevo.gateway import SyntheticEvaluator, SyntheticOracleSpec
from promptevo.operators import OperatorConfig, TaskKind, WordPool
from promptevo.prompt import ALL_ORDERS, CANONICAL_ORDER, Prompt, PromptTemplate

WORDS = ["alpha", "beta", "gamma", "delta"]


def enumerate_space(words, cap):
    for n in range(cap + 1):
        for ws in itertools.product(words, repeat=n):
            for k in range(n + 1):
                for order in ALL_ORDERS:
                    yield Prompt(PromptTemplate(ws[:k], ws[k:], order))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--population", type=int, default=10)
    ap.add_argument("--generations", type=int, default=20)
    args = ap.parse_args()

    target = PromptTemplate(("alpha", "beta"), ("gamma",), CANONICAL_ORDER)
    evaluator = SyntheticEvaluator(SyntheticOracleSpec(target))
    space = list(enumerate_space(WORDS, 2))
    optimum = max(evaluator(p) for p in space)
    winners = [p for p in space if evaluator(p) == optimum]
    print(f"space={len(space)} optimum={optimum:.6f} optimal prompts={len(winners)}")

    pool = WordPool(tuple((w,) for w in WORDS))
    ops = OperatorConfig(max_prompt_length=2, task_kind=TaskKind.GENERATION)
    hits = 0
    for seed in range(args.seeds):
        cfg = EvolutionConfig(args.population, args.generations, ops, seed=seed)
        best, _ = evolve(cfg, evaluator, pool)
        hits += best.fitness == optimum
    print(f"GA hit optimum in {hits}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
