"""Measure how often the GA recovers a planted prompt under the synthetic oracle.

Example:
    python3 scripts/synthetic_convergence.py --seeds 200 --generations 30
"""

import argparse
import random
import statistics
import time

from promptevo.engine import EvolutionConfig, evolve
from promptevo.gateway import SyntheticEvaluator, SyntheticOracleSpec
from promptevo.operators import OperatorConfig, TaskKind, WordPool
from promptevo.prompt import PromptTemplate, SegmentId

S1, S2, C, M = SegmentId.STR1, SegmentId.STR2, SegmentId.CODE_SLOT, SegmentId.MASK_SLOT
FILLER = [
    "Translate", "into", "Java", "method", "returns", "Write", "docstring", "program", "Explain", "what",
    "does", "Describe", "function", "This", "code", "is", "Generate", "comments", "for", "a",
    "The", "works", "input", "output", "value", "class", "loop", "file", "list", "string",
    "Please", "read", "carefully", "answer", "below", "above", "snippet", "source", "logic", "purpose",
    "here", "now", "very", "short", "long", "simple", "clear",
]
TARGET = PromptTemplate(("Summarize", "the"), ("briefly",), (S1, C, M, S2))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--generations", type=int, default=30)
    ap.add_argument("--population", type=int, default=20)
    ap.add_argument("--threshold", type=float, default=0.9)
    ap.add_argument("--pool-seed", type=int, default=70)
    args = ap.parse_args()

    entries = [(w,) for w in FILLER + list(TARGET.words)]
    random.Random(args.pool_seed).shuffle(entries)
    pool = WordPool(tuple(entries))
    evaluator = SyntheticEvaluator(SyntheticOracleSpec(TARGET))
    ops = OperatorConfig(crossover_prob=0.9, mutation_prob=0.4, max_prompt_length=5, task_kind=TaskKind.GENERATION)

    start = time.perf_counter()
    finals, evals = [], []
    for seed in range(args.seeds):
        cfg = EvolutionConfig(args.population, args.generations, ops, seed=seed)
        best, history = evolve(cfg, evaluator, pool)
        finals.append(best.fitness)
        evals.append(history.records[-1].evaluations)
    hits = sum(f >= args.threshold for f in finals)
    print(f"seeds={args.seeds} generations={args.generations} pool={len(entries)}")
    print(f"reached {args.threshold}: {hits}/{args.seeds} ({hits / args.seeds:.1%})")
    print(f"final fitness mean={statistics.mean(finals):.4f} median={statistics.median(finals):.4f}")
    print(f"distinct evaluations per run mean={statistics.mean(evals):.1f}")
    print(f"elapsed {time.perf_counter() - start:.2f}s")


if __name__ == "__main__":
    main()
