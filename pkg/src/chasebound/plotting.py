"""Figures written next to the JSON reports (matplotlib, Agg backend)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .chase import ChaseResult  # noqa: E402


def _save(fig, path: str) -> None:
    fig.tight_layout()
    # No metadata, so repeated runs write identical files.
    fig.savefig(path, metadata={"Software": None, "Creation Time": None} if path.endswith(".png") else None)
    plt.close(fig)


def plot_chase(res: ChaseResult, path: str) -> None:
    """New atoms per round and the largest depth introduced in each round."""
    rounds = list(range(1, res.fuel_used + 1))
    depth = [0] * len(rounds)
    frdepth = [0] * len(rounds)
    for t, r in res.term_rank.items():
        if r > 0:
            depth[r - 1] = max(depth[r - 1], res.depth_of[t])
            frdepth[r - 1] = max(frdepth[r - 1], res.frdepth_of[t])
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    top.bar(rounds, res.round_sizes, color="0.4")
    top.set_ylabel("new atoms")
    status = f"rank {int(res.chase_rank)}" if res.terminated else f"no fixpoint within {res.fuel} rounds"
    top.set_title(f"{res.variant} chase, {status}")
    bottom.plot(rounds, depth, marker="o", label="existential depth")
    bottom.plot(rounds, frdepth, marker="s", label="frontier depth")
    bottom.set_xlabel("round")
    bottom.set_ylabel("max depth of new terms")
    bottom.legend(frameon=False)
    _save(fig, path)


def plot_rewriting(sizes: Sequence[int], path: str, title: str = "UCQ rewriting") -> None:
    """UCQ size after each breadth-first step (step 0 is the input query)."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(range(len(sizes)), sizes, marker="o", color="0.2")
    ax.set_xlabel("rewriting step")
    ax.set_ylabel("CQs in the UCQ")
    ax.set_title(title)
    ax.set_xticks(range(len(sizes)))
    _save(fig, path)
