"""Atomic CSV / JSON / SVG writers for result bundles."""

from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path
from xml.sax.saxutils import escape

from .experiment import CurveRecord, ResultBundle

__all__ = ["OutputError", "export", "check_output_dir", "curve_csv", "curve_svg", "FORMATS"]

FORMATS = ("csv", "json", "svg")
CSV_HEADER = "t,mean_uz,stderr_uz"


class OutputError(OSError):
    pass


def check_output_dir(path: str | Path) -> Path:
    """Create ``path`` if needed and make sure it is writable."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"{path}: cannot create output directory ({exc.strerror})") from None
    if not path.is_dir() or not os.access(path, os.W_OK | os.X_OK):
        raise OutputError(f"{path}: output directory is not writable")
    return path


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise OutputError(f"{path}: write failed ({exc.strerror})") from None


def _provenance(bundle: ResultBundle) -> str:
    return f"config_sha256={bundle.config_sha256} root_seed={bundle.root_seed}"


def curve_csv(bundle: ResultBundle, curve: CurveRecord) -> str:
    lines = [CSV_HEADER]
    lines += [f"{t!r},{m!r},{s!r}" for t, m, s in zip(curve.t, curve.mean_uz, curve.stderr_uz)]
    lines.append(f"# {_provenance(bundle)}")
    return "\n".join(lines) + "\n"


def _oracle_csv(bundle: ResultBundle) -> str:
    lines = ["t,closed_form,quadrature"]
    for row in bundle.oracle_table.rows:
        q = "" if row.quadrature is None else repr(row.quadrature)
        lines.append(f"{row.t!r},{row.closed_form!r},{q}")
    lines.append(f"# {_provenance(bundle)}")
    return "\n".join(lines) + "\n"


def curve_svg(bundle: ResultBundle, curve: CurveRecord, width: int = 640, height: int = 400) -> str:
    """Line plot of mean_uz against t, with the exponential oracle overlaid when known."""
    pad = 50
    t = curve.t
    t_max = t[-1] if t[-1] > 0 else 1.0
    ys = [v for v in curve.mean_uz if math.isfinite(v)]
    lo = min(0.0, min(ys, default=0.0))
    hi = max(1.0, max(ys, default=1.0))

    def px(ti, yi):
        x = pad + (width - 2 * pad) * ti / t_max
        y = height - pad - (height - 2 * pad) * (yi - lo) / (hi - lo)
        return f"{x:.2f},{y:.2f}"

    sim = " ".join(px(ti, yi) for ti, yi in zip(t, curve.mean_uz) if math.isfinite(yi))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<desc>{escape(_provenance(bundle))}</desc>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="12">t</text>',
        f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.0f})">mean u_z</text>',
        f'<text x="{pad - 6}" y="{height - pad + 4}" text-anchor="end" font-size="10">{lo:g}</text>',
        f'<text x="{pad - 6}" y="{pad + 4}" text-anchor="end" font-size="10">{hi:g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="middle" font-size="10">{t_max:g}</text>',
        f'<polyline class="simulation" fill="none" stroke="#1f77b4" stroke-width="1.5" points="{sim}"/>',
    ]
    oracle = bundle.oracle_for(curve.label)
    if oracle is not None:
        ref = " ".join(px(ti, math.exp(-oracle * ti)) for ti in t)
        parts.append(
            f'<polyline class="oracle" fill="none" stroke="#d62728" stroke-dasharray="5,3" '
            f'stroke-width="1.5" points="{ref}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export(bundle: ResultBundle, formats=None, out_dir: str | Path | None = None) -> list[Path]:
    """Write the requested artifacts and return their paths.

    Every file is written to a temporary sibling and renamed into place.
    """
    formats = list(formats if formats is not None else bundle.config.output.formats)
    unknown = sorted(set(formats) - set(FORMATS))
    if unknown:
        raise ValueError(f"unknown formats: {unknown}")
    out = check_output_dir(out_dir if out_dir is not None else bundle.config.output.dir)
    written = []
    stem = bundle.scenario
    if "csv" in formats:
        for curve in bundle.curves:
            path = out / f"{curve.label}.csv"
            _atomic_write(path, curve_csv(bundle, curve))
            written.append(path)
        if bundle.oracle_table is not None:
            path = out / f"{stem}.csv"
            _atomic_write(path, _oracle_csv(bundle))
            written.append(path)
    if "json" in formats:
        path = out / f"{stem}.json"
        _atomic_write(path, bundle.model_dump_json(indent=2) + "\n")
        written.append(path)
    if "svg" in formats:
        for curve in bundle.curves:
            path = out / f"{curve.label}.svg"
            _atomic_write(path, curve_svg(bundle, curve))
            written.append(path)
    return written
