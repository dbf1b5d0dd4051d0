"""Static SVG plots.  Output is byte-stable: fixed hash salt, no date stamp."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {"svg.hashsalt": "critrouter", "svg.fonttype": "none", "font.size": 9}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def usage_curves(series: dict, K: int, path, title: str = "agent usage per query") -> None:
    """``series`` maps a setting label to its list of TrainRecords; draws one
    curve per agent per setting."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        styles = ["-", "--", ":", "-."]
        for s, (label, records) in enumerate(series.items()):
            its = [r.iteration for r in records]
            for k in range(K):
                ax.plot(
                    its,
                    [r.usage[k] for r in records],
                    linestyle=styles[s % len(styles)],
                    color=f"C{k}",
                    label=f"agent {k + 1}, {label}",
                )
        ax.set_xlabel("iteration")
        ax.set_ylabel("invocations per query")
        ax.set_title(title)
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        _save(fig, path)


def training_curves(records, path) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        its = [r.iteration for r in records]
        ax.plot(its, [r.reward_mod for r in records], label="modified return")
        ax.plot(its, [r.reward_raw for r in records], label="raw return")
        ax.plot(its, [r.route_acc for r in records], label="routing accuracy")
        ax.plot(its, [r.verify_acc for r in records], label="verification accuracy")
        ax.set_xlabel("iteration")
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def sweep_plot(rows, path) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        Ts = [r.horizon for r in rows]
        ax.plot(Ts, [r.accuracy for r in rows], marker="o", label="accuracy")
        ax.plot(Ts, [r.exhaustion_fraction for r in rows], marker="s", label="exhausted fraction")
        ax.set_xlabel("inference turns T")
        ax.set_xticks(Ts)
        ax.set_ylim(0, 1.02)
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)
