"""Figure and plot-data emission for sweep results."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_STYLES = {
    "full_bw_centralized": dict(color="k", marker="o"),
    "ae_centralized": dict(color="tab:blue", marker="s"),
    "array_reduced": dict(color="tab:red", marker="^"),
    "decentralized_admm": dict(color="tab:green", marker="d"),
}


def _series_label(scenario: str, n_div) -> str:
    if n_div is None:
        return scenario
    return f"{scenario} (n_div={n_div})"


def collect_series(records):
    """Group records into {label: (snrs, evms)} sorted by SNR."""
    series = {}
    for r in records:
        key = (r.scenario, r.n_div)
        series.setdefault(key, []).append((r.snr_db, r.evm_percent))
    out = {}
    for (scenario, n_div), points in series.items():
        points.sort()
        out[_series_label(scenario, n_div)] = (
            [p[0] for p in points],
            [p[1] for p in points],
            scenario,
            n_div,
        )
    return out

def render_figure(records, path: str) -> None:
    """EVM-vs-SNR curves, one line per scenario variant, log EVM axis."""
    fig, ax = plt.subplots(figsize=(7.0, 4.8))
    dashes_by_ndiv = {None: "-", 1: "-", 2: "--", 4: "-.", 8: ":", 16: (0, (1, 1))}
    for label, (snrs, evms, scenario, n_div) in sorted(collect_series(records).items()):
        style = _STYLES.get(scenario, {})
        ax.semilogy(
            snrs,
            evms,
            linestyle=dashes_by_ndiv.get(n_div, "-"),
            markersize=4,
            label=label,
            **style,
        )
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("EVM (%)")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def emit_plot_data(records, path: str) -> None:
    """Wide CSV shaped for generic plotting tools: one column per series."""
    series = collect_series(records)
    snrs = sorted({s for snrs, _, _, _ in series.values() for s in snrs})
    labels = sorted(series)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["snr_db"] + labels)
        for snr in snrs:
            row = ["{:.10g}".format(snr)]
            for label in labels:
                xs, ys, _, _ = series[label]
                row.append(
                    "{:.10g}".format(ys[xs.index(snr)]) if snr in xs else ""
                )
            writer.writerow(row)
