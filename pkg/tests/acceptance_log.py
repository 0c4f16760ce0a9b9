"""One PASS/FAIL line per acceptance criterion, collected across tests."""
import sys

_RESULTS = {}


def record(k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    _RESULTS[k] = line
    # also shown live, so the line survives even if the run is interrupted
    print(line, file=sys.__stdout__, flush=True)
    return ok


def lines():
    return [_RESULTS[k] for k in sorted(_RESULTS)]
