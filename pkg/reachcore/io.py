"""Methods for writing reach tubes, run summaries and plot scripts to disk."""
import json
import logging
import os
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .reach import Branch, EmbeddingState, ReachTube
from .safety import Verdict

logger = logging.getLogger(__name__)


def _check_clobber(path, clobber):
    if os.path.exists(path) and not clobber:
        raise ValueError(f"File {path} exists and clobber=False.")


def write_tube_jsonl(tube: ReachTube, path, clobber: bool = True) -> str:
    """Write one ``{"branch", "t", "lo", "hi"}`` record per line.

    Records are ordered by branch id, then time, so identical runs give
    identical files.
    """
    _check_clobber(path, clobber)
    with open(path, "w") as fl:
        for record in tube.records():
            fl.write(json.dumps(record) + "\n")
    logger.info(f"Wrote {len(tube.branches)} branch(es) to {path}.")
    return str(path)


def read_tube_jsonl(path) -> ReachTube:
    """Rebuild a tube (without fingerprint and statistics) from its records."""
    samples = defaultdict(list)
    with open(path, "r") as fl:
        for line in fl:
            if not line.strip():
                continue
            record = json.loads(line)
            samples[record["branch"]].append(
                EmbeddingState(
                    np.array(record["lo"], dtype=float),
                    np.array(record["hi"], dtype=float),
                    float(record["t"]),
                )
            )
    branches = [Branch(bid, samples[bid]) for bid in sorted(samples)]
    return ReachTube(branches)


def runtime_stats(runtimes: Sequence[float]) -> Dict[str, object]:
    """Mean and standard deviation of wall-clock runtimes."""
    runtimes = np.asarray(runtimes, dtype=float)
    mean, std = float(runtimes.mean()), float(runtimes.std())
    return {
        "runs": int(runtimes.size),
        "mean": mean,
        "std": std,
        "text": f"{mean:.4g}±{std:.2g} seconds",
    }


def tube_summary(
    tube: ReachTube,
    verdict: Optional[Verdict] = None,
    pairs: Sequence[Tuple[int, int]] = ((0, 1),),
    runtimes: Optional[Sequence[float]] = None,
) -> dict:
    """A JSON-ready summary of one tube.

    Parameters
    ----------
    tube
        The computed tube.
    verdict
        Optional result of :func:`~.safety.check_spec`.
    pairs
        Coordinate pairs whose final-box areas are reported; pairs outside
        the tube's dimension are skipped.
    runtimes
        Wall-clock seconds of repeated runs; defaults to the tube's own.
    """
    if runtimes is None:
        runtimes = [tube.stats.get("runtime", 0.0)]
    summary = {
        "config": tube.fingerprint,
        "branches": len(tube.branches),
        "refreshes": tube.stats.get("refreshes", 0),
        "times": [float(t) for t in tube.times],
        "widths": tube.widths.tolist(),
        "final_box": tube.final_box.tolist(),
        "areas": {
            f"{i},{j}": tube.area(i, j) for i, j in pairs if max(i, j) < tube.dim
        },
        "runtime": runtime_stats(runtimes),
    }
    if verdict is not None:
        summary["verdict"] = verdict.to_dict()
    return summary


def write_summary(summary: dict, path, clobber: bool = True) -> str:
    _check_clobber(path, clobber)
    with open(path, "w") as fl:
        json.dump(summary, fl, indent=2, sort_keys=True, default=_jsonable)
    return str(path)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return repr(obj)


def write_gnuplot(
    tube: ReachTube,
    save_dir,
    pairs: Sequence[Tuple[int, int]] = ((0, 1),),
    prefix: str = "tube",
    trajectories: Optional[np.ndarray] = None,
) -> List[str]:
    """Write data files and a gnuplot script projecting the tube on ``pairs``.

    Every branch box at every stored time is drawn as a rectangle. Sampled
    trajectories of shape ``(n_samples, len(tube), n)`` are overlaid when
    given.

    Files are named ``save_dir/{prefix}.{i}-{j}.dat`` (rectangle columns
    ``xlo xhi ylo yhi t branch``), ``save_dir/{prefix}.traj.dat`` and
    ``save_dir/{prefix}.gp``.

    Returns
    -------
    list of str
        Paths of all files written, script last.
    """
    os.makedirs(save_dir, exist_ok=True)
    written = []
    plots = []
    for i, j in pairs:
        if max(i, j) >= tube.dim:
            raise ValueError(f"Cannot project a {tube.dim}-D tube on ({i}, {j}).")
        datafile = os.path.join(save_dir, f"{prefix}.{i}-{j}.dat")
        with open(datafile, "w") as fl:
            fl.write("# xlo xhi ylo yhi t branch\n")
            for branch in tube.branches:
                for s in branch.samples:
                    fl.write(
                        f"{s.lo[i]!r} {s.hi[i]!r} {s.lo[j]!r} {s.hi[j]!r} "
                        f"{s.t!r} {branch.id}\n"
                    )
        written.append(datafile)
        plots.append((i, j, os.path.basename(datafile)))

    trajfile = None
    if trajectories is not None:
        trajfile = os.path.join(save_dir, f"{prefix}.traj.dat")
        with open(trajfile, "w") as fl:
            for path in trajectories:
                for point in path:
                    fl.write(" ".join(repr(float(v)) for v in point) + "\n")
                # blank line separates trajectories
                fl.write("\n")
        written.append(trajfile)

    lines = ["set terminal pngcairo size 800,600", "unset key"]
    for i, j, datafile in plots:
        lines += [
            f"set output '{prefix}.{i}-{j}.png'",
            f"set xlabel 'x{i + 1}'",
            f"set ylabel 'x{j + 1}'",
        ]
        plot = (
            f"plot '{datafile}' using (($1+$2)/2):(($3+$4)/2):1:2:3:4 "
            "with boxxyerror "
            "fillstyle transparent solid 0.3 noborder lc rgb 'blue'"
        )
        if trajfile is not None:
            plot += (
                f", '{os.path.basename(trajfile)}' using {i + 1}:{j + 1} "
                "with lines lc rgb 'black'"
            )
        lines.append(plot)
    script = os.path.join(save_dir, f"{prefix}.gp")
    with open(script, "w") as fl:
        fl.write("\n".join(lines) + "\n")
    written.append(script)
    logger.info(f"Wrote gnuplot script {script}.")
    return written


def error_record(err: Exception) -> dict:
    """The machine-readable form of an error reported by the command line."""
    return {"error": type(err).__name__, "message": str(err)}
