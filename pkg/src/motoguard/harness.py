"""Deterministic scenario replay and confusion-matrix evaluation.

Scenario files are line-delimited JSON: a header record (name, config
overrides, expected labels) followed by time-ordered sensor events. Replays
run entirely on the virtual clock against a compliant fake modem, so the
serialized event log for a given scenario is byte-identical on every run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .controller import ControllerState, Mode, drain_sms, step
from .core import (Alert, ActuatorCommand, AlertKind, Buzzer, ContractViolation,
                   ControllerConfig, DEFAULT_CONFIG, IgnitionInhibit, SensorEvent,
                   Severity, SmsSend, SolenoidLock, ValidationError, VirtualClock,
                   apply_overrides, event_from_record, event_to_record,
                   require_valid_config, severity_of)
from .gsm import FakeModem, ModemClient


class SchemaError(ValueError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class UnsortedEvents(ValueError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"event {index} is earlier than its predecessor")


class UndefinedMetric(ArithmeticError):
    pass


@dataclass(frozen=True)
class ExpectedLabel:
    """A positive label is a kind plus a time window; a negative label
    declares that no alert of the kind may appear anywhere in the run."""

    kind: AlertKind
    start_ms: int | None = None
    end_ms: int | None = None

    @property
    def negative(self) -> bool:
        return self.start_ms is None

    def __post_init__(self):
        if (self.start_ms is None) != (self.end_ms is None):
            raise ContractViolation("window needs both start_ms and end_ms")
        if self.start_ms is not None:
            if self.start_ms < 0 or self.end_ms < self.start_ms:
                raise ContractViolation(f"bad window [{self.start_ms}, {self.end_ms}]")


@dataclass
class Scenario:
    name: str
    description: str = ""
    config: dict = field(default_factory=dict)
    events: list[SensorEvent] = field(default_factory=list)
    expected: list[ExpectedLabel] = field(default_factory=list)


@dataclass(frozen=True)
class ModeChange:
    t_ms: int
    mode: Mode


LogRecord = Alert | ActuatorCommand | ModeChange


@dataclass
class EventLog:
    records: list[LogRecord] = field(default_factory=list)

    def alerts(self) -> list[Alert]:
        return [r for r in self.records if isinstance(r, Alert)]

    def commands(self) -> list[ActuatorCommand]:
        return [r for r in self.records if isinstance(r, ActuatorCommand)]


# --- scenario files --------------------------------------------------------

_HEADER_KEYS = {"name", "description", "config", "expected"}


def _label_from_obj(obj: dict, line_no: int) -> ExpectedLabel:
    if not isinstance(obj, dict):
        raise SchemaError(line_no, "expected label must be an object")
    extra = dict(obj)
    kind_text = extra.pop("kind", None)
    try:
        kind = AlertKind(kind_text)
    except ValueError:
        raise SchemaError(line_no, f"unknown alert kind {kind_text!r}") from None
    if extra.pop("negative", False):
        if extra:
            raise SchemaError(line_no, f"negative label has extra fields: {sorted(extra)}")
        return ExpectedLabel(kind)
    start = extra.pop("start_ms", None)
    end = extra.pop("end_ms", None)
    if extra:
        raise SchemaError(line_no, f"label has extra fields: {sorted(extra)}")
    if not isinstance(start, int) or not isinstance(end, int):
        raise SchemaError(line_no, "label window needs integer start_ms and end_ms")
    try:
        return ExpectedLabel(kind, start, end)
    except ContractViolation as exc:
        raise SchemaError(line_no, str(exc)) from None


def loads_scenario(text: str) -> Scenario:
    lines = text.splitlines()
    header = None
    header_line = 0
    events: list[SensorEvent] = []
    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(line_no, f"invalid JSON: {exc.msg}") from None
        if header is None:
            header = obj
            header_line = line_no
            continue
        try:
            events.append(event_from_record(obj))
        except ContractViolation as exc:
            raise SchemaError(line_no, str(exc)) from None
    if header is None:
        raise SchemaError(1, "missing header record")
    if not isinstance(header, dict):
        raise SchemaError(header_line, "header must be an object")
    unknown = sorted(set(header) - _HEADER_KEYS)
    if unknown:
        raise SchemaError(header_line, f"unknown header fields: {', '.join(unknown)}")
    name = header.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError(header_line, "header needs a non-empty name")
    description = header.get("description", "")
    if not isinstance(description, str):
        raise SchemaError(header_line, "description must be a string")
    config = header.get("config", {})
    if not isinstance(config, dict):
        raise SchemaError(header_line, "config must be an object")
    expected = [_label_from_obj(obj, header_line) for obj in header.get("expected", [])]
    kinds_pos = {lab.kind for lab in expected if not lab.negative}
    kinds_neg = {lab.kind for lab in expected if lab.negative}
    clash = kinds_pos & kinds_neg
    if clash:
        raise SchemaError(header_line,
                          f"kind both expected and declared negative: {sorted(k.value for k in clash)}")
    for index in range(1, len(events)):
        if events[index].t_ms < events[index - 1].t_ms:
            raise UnsortedEvents(index)
    return Scenario(name=name, description=description, config=config,
                    events=events, expected=expected)


def load_scenario(path: str | Path) -> Scenario:
    return loads_scenario(Path(path).read_text(encoding="utf-8"))


def dumps_scenario(sc: Scenario) -> str:
    header: dict = {"name": sc.name}
    if sc.description:
        header["description"] = sc.description
    if sc.config:
        header["config"] = sc.config
    if sc.expected:
        header["expected"] = [
            {"kind": lab.kind.value, "negative": True} if lab.negative
            else {"kind": lab.kind.value, "start_ms": lab.start_ms, "end_ms": lab.end_ms}
            for lab in sc.expected
        ]
    out = [json.dumps(header)]
    out.extend(json.dumps(event_to_record(ev)) for ev in sc.events)
    return "\n".join(out) + "\n"


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps_scenario(sc), encoding="utf-8")


# --- replay ---------------------------------------------------------------

def run(sc: Scenario, cfg: ControllerConfig = DEFAULT_CONFIG) -> EventLog:
    """Replay a scenario against a fresh controller and compliant fake modem."""
    merged = require_valid_config(apply_overrides(cfg, sc.config))
    clock = VirtualClock()
    modem = FakeModem(clock)
    client = ModemClient(modem)
    client.modem_init()
    state = ControllerState()
    log = EventLog([ModeChange(0, Mode.PARKED)])
    index = 0
    events = sc.events
    while index < len(events):
        t_ms = events[index].t_ms
        group = []
        while index < len(events) and events[index].t_ms == t_ms:
            group.append(events[index])
            index += 1
        clock.advance_to(t_ms)
        before = state.mode
        try:
            state, alerts, commands = step(merged, state, t_ms, group)
        except ContractViolation as exc:
            raise ContractViolation(f"{sc.name}: at t={t_ms}: {exc}") from exc
        log.records.extend(alerts)
        log.records.extend(commands)
        if state.mode is not before:
            log.records.append(ModeChange(t_ms, state.mode))
        state.router, _, _ = drain_sms(state.router, client)
    return log


# --- log serialization -----------------------------------------------------

_ACTION_TAGS = {Buzzer: "buzzer", IgnitionInhibit: "ignition_inhibit",
                SolenoidLock: "solenoid_lock", SmsSend: "sms_send"}


def _record_to_obj(rec: LogRecord) -> dict:
    if isinstance(rec, Alert):
        return {"t_ms": rec.t_ms, "type": "alert", "kind": rec.kind.value,
                "severity": rec.severity.label, "message": rec.message}
    if isinstance(rec, ActuatorCommand):
        obj = {"t_ms": rec.t_ms, "type": "command",
               "action": _ACTION_TAGS[type(rec.action)]}
        if isinstance(rec.action, SmsSend):
            obj["to"] = rec.action.to
            obj["body"] = rec.action.body
        elif isinstance(rec.action, SolenoidLock):
            obj["engaged"] = rec.action.engaged
        else:
            obj["on"] = rec.action.on
        return obj
    return {"t_ms": rec.t_ms, "type": "mode", "mode": rec.mode.value}


def log_to_jsonl(log: EventLog) -> str:
    """Canonical one-record-per-line rendering; byte-stable across runs."""
    return "\n".join(json.dumps(_record_to_obj(r)) for r in log.records) + "\n"


# --- expected-label matching and metrics ----------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def match_alerts(log: EventLog, expected: list[ExpectedLabel]) -> ConfusionMatrix:
    """Greedy windowed matching: each alert satisfies at most one label.

    A positive window is a true positive when some alert of its kind lands
    inside it, matched earliest-window first. Alerts left over are false
    positives. Negative labels count as true negatives unless violated.
    """
    alerts = log.alerts()
    positives = [lab for lab in expected if not lab.negative]
    negatives = [lab for lab in expected if lab.negative]
    fp = 0
    matched: set[int] = set()
    by_kind: dict[AlertKind, list[tuple[int, ExpectedLabel]]] = {}
    for idx, lab in enumerate(positives):
        by_kind.setdefault(lab.kind, []).append((idx, lab))
    for windows in by_kind.values():
        windows.sort(key=lambda pair: (pair[1].start_ms, pair[1].end_ms, pair[0]))
    for alert in alerts:
        windows = by_kind.get(alert.kind, [])
        hit = next((idx for idx, lab in windows
                    if idx not in matched and lab.start_ms <= alert.t_ms <= lab.end_ms),
                   None)
        if hit is None:
            fp += 1
        else:
            matched.add(hit)
    tp = len(matched)
    fn = len(positives) - tp
    seen_kinds = {a.kind for a in alerts}
    tn = sum(1 for lab in negatives if lab.kind not in seen_kinds)
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def accuracy(cm: ConfusionMatrix) -> float:
    """(TP + TN) / (TP + TN + FN + FP) x 100; raw value, no rounding."""
    if cm.total == 0:
        raise UndefinedMetric("no labeled outcomes")
    return (cm.tp + cm.tn) * 100 / cm.total


def error_rate(cm: ConfusionMatrix) -> float:
    """(FP + FN) / (TP + TN + FN + FP) x 100; raw value, no rounding."""
    if cm.total == 0:
        raise UndefinedMetric("no labeled outcomes")
    return (cm.fp + cm.fn) * 100 / cm.total


# --- corpus evaluation and reporting ---------------------------------------

@dataclass
class CaseResult:
    case_id: str
    name: str
    objective: str
    event_count: int
    expected_summary: str
    cm: ConfusionMatrix
    passed: bool
    incidents: list[str]
    worst_severity: Severity | None


def _label_text(lab: ExpectedLabel) -> str:
    if lab.negative:
        return f"no {lab.kind.value}"
    return f"{lab.kind.value}[{lab.start_ms}..{lab.end_ms}]"


def _case_incidents(log: EventLog, expected: list[ExpectedLabel]) -> tuple[list[str], Severity | None]:
    alerts = log.alerts()
    notes: list[str] = []
    worst: Severity | None = None

    def bump(kind: AlertKind) -> None:
        nonlocal worst
        sev = severity_of(kind)
        worst = sev if worst is None else max(worst, sev)

    positives = [lab for lab in expected if not lab.negative]
    matched: set[int] = set()
    by_kind: dict[AlertKind, list[tuple[int, ExpectedLabel]]] = {}
    for idx, lab in enumerate(positives):
        by_kind.setdefault(lab.kind, []).append((idx, lab))
    for windows in by_kind.values():
        windows.sort(key=lambda pair: (pair[1].start_ms, pair[1].end_ms, pair[0]))
    for alert in alerts:
        hit = next((idx for idx, lab in by_kind.get(alert.kind, [])
                    if idx not in matched and lab.start_ms <= alert.t_ms <= lab.end_ms),
                   None)
        if hit is None:
            notes.append(f"unexpected {alert.kind.value} alert at t={alert.t_ms}ms")
            bump(alert.kind)
        else:
            matched.add(hit)
    for idx, lab in enumerate(positives):
        if idx not in matched:
            notes.append(f"missed {lab.kind.value} alert in "
                         f"[{lab.start_ms}..{lab.end_ms}]ms")
            bump(lab.kind)
    return notes, worst


def evaluate_scenarios(scenarios: list[Scenario],
                       cfg: ControllerConfig = DEFAULT_CONFIG) -> list[CaseResult]:
    """Run and score scenarios in deterministic (name) order."""
    results: list[CaseResult] = []
    ordered = sorted(scenarios, key=lambda sc: sc.name)
    for pos, sc in enumerate(ordered, start=1):
        log = run(sc, cfg)
        cm = match_alerts(log, sc.expected)
        notes, worst = _case_incidents(log, sc.expected)
        results.append(CaseResult(
            case_id=f"TC-{pos:02d}",
            name=sc.name,
            objective=sc.description or sc.name,
            event_count=len(sc.events),
            expected_summary="; ".join(_label_text(lab) for lab in sc.expected) or "none",
            cm=cm,
            passed=cm.fp == 0 and cm.fn == 0,
            incidents=notes,
            worst_severity=worst,
        ))
    return results


def _pct(part: int, whole: int) -> str:
    if whole == 0:
        return "0%"
    value = part * 100 / whole
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return f"{text}%"


_INCIDENT_SEVERITY = {Severity.HIGH: ("Severity 1", "High"),
                      Severity.MEDIUM: ("Severity 2", "Medium"),
                      Severity.LOW: ("Severity 3", "Low")}


def _table(rows: list[list[str]]) -> list[str]:
    widths = [max(len(row[col]) for row in rows) for col in range(len(rows[0]))]
    return ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
            for row in rows]


def render_report(results: list[CaseResult]) -> str:
    """Plain-text report: per-case table, execution summary, incident log."""
    lines: list[str] = ["TEST CASE RESULTS"]
    if not results:
        lines.append("(no cases)")
    else:
        rows = [["ID", "NAME", "OBJECTIVE", "ACTIONS", "EXPECTED", "STATUS"]]
        for r in results:
            rows.append([r.case_id, r.name, r.objective, f"{r.event_count} events",
                         r.expected_summary, "Passed" if r.passed else "Failed"])
        lines.extend(_table(rows))

    total = len(results)
    passed = sum(1 for r in results if r.passed)
    failed = total - passed
    lines += ["", "TEST EXECUTION SUMMARY",
              f"No of TC Executed {_pct(total, total)} ({total} of {total})",
              f"Successful {_pct(passed, total)} ({passed} of {total})",
              f"Failed {_pct(failed, total)} ({failed} of {total})",
              f"No of TC Not Executed 0% (0 of {total})"]

    agg = ConfusionMatrix(tp=sum(r.cm.tp for r in results), tn=sum(r.cm.tn for r in results),
                          fp=sum(r.cm.fp for r in results), fn=sum(r.cm.fn for r in results))
    lines += ["", "DETECTION METRICS",
              f"tp={agg.tp} tn={agg.tn} fp={agg.fp} fn={agg.fn}"]
    if agg.total == 0:
        lines.append("Accuracy undefined (no labeled outcomes)")
    else:
        lines.append(f"Accuracy {accuracy(agg):.2f}%")
        lines.append(f"Error {error_rate(agg):.2f}%")

    lines += ["", "TEST INCIDENT LOG"]
    incident_rows = [["No.", "Description", "Test Case Reference", "Severity", "Priority"]]
    counter = 0
    for r in results:
        if r.passed:
            continue
        counter += 1
        sev_text, priority = _INCIDENT_SEVERITY[r.worst_severity or Severity.MEDIUM]
        incident_rows.append([str(counter), "; ".join(r.incidents),
                              f"{r.case_id} {r.name}", sev_text, priority])
    if counter == 0:
        lines.append("(no incidents)")
    else:
        lines.extend(_table(incident_rows))
    return "\n".join(lines) + "\n"


def report_json(results: list[CaseResult]) -> dict:
    """Machine-readable mirror of render_report."""
    total = len(results)
    passed = sum(1 for r in results if r.passed)
    agg = ConfusionMatrix(tp=sum(r.cm.tp for r in results), tn=sum(r.cm.tn for r in results),
                          fp=sum(r.cm.fp for r in results), fn=sum(r.cm.fn for r in results))
    summary = {"total": total, "executed": total, "passed": passed, "failed": total - passed,
               "pass_pct": (passed * 100 / total) if total else None,
               "tp": agg.tp, "tn": agg.tn, "fp": agg.fp, "fn": agg.fn,
               "accuracy": accuracy(agg) if agg.total else None,
               "error": error_rate(agg) if agg.total else None}
    cases = [{"id": r.case_id, "name": r.name, "objective": r.objective,
              "events": r.event_count, "expected": r.expected_summary,
              "tp": r.cm.tp, "tn": r.cm.tn, "fp": r.cm.fp, "fn": r.cm.fn,
              "passed": r.passed, "incidents": r.incidents}
             for r in results]
    return {"schema": "motoguard-eval-v1", "summary": summary, "cases": cases}
