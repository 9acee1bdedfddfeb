"""CSV persistence for spectrum reports: header `bin,freq,<series...>`"""
import csv
from pathlib import Path

import numpy as np

from ..utils.errors import SpectrumError
from .analysis import SpectrumReport


def write_csv(report: SpectrumReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fieldnames = ['bin', 'freq', *report.series]
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for b in range(report.bins):
            row = {'bin': b, 'freq': repr(float(report.freq[b]))}
            for name, values in report.series.items():
                row[name] = repr(float(values[b]))
            writer.writerow(row)
    return path


def read_csv(path) -> SpectrumReport:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.DictReader(f)
        fields = reader.fieldnames or []
        if fields[:2] != ['bin', 'freq']:
            raise SpectrumError(f"{path}: header must start with bin,freq, got {fields[:2]}")
        rows = list(reader)
    if not rows:
        raise SpectrumError(f"{path}: no rows")
    report = SpectrumReport(bins=len(rows), freq=np.array([float(r['freq']) for r in rows]))
    for name in fields[2:]:
        report.add(name, np.array([float(r[name]) for r in rows]))
    return report
