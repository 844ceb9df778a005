"""Mode-aware orchestration: sensor events in, alerts and actuator commands out.

The controller is a pure step function over an explicit state value, so any
prefix of an event stream reproduces the same mode and outputs. Detectors are
gated by mode: the riding aids only run while Riding, the pre-ride gas checks
only in PreRide, and the anti-theft logic only while Parked or TheftSuspected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from enum import Enum

from .core import (Alert, ActuatorCommand, AlertKind, Auth, Buzzer, ContractViolation,
                   ControllerConfig, GasReading, GpsFix, Ignition, IgnitionInhibit,
                   LidarRange, MagField, PirMotion, Severity, SensorEvent, SmsSend,
                   SolenoidLock, SupplyVoltage, Tilt, severity_of, truncate_sms)
from .detectors import (CollisionState, CrashState, MagState, TheftState, Trigger,
                        breath_check, collision_step, crash_step, gas_leak_check,
                        hazard_step, mag_step, overspeed_step, overtake_assist,
                        theft_step)
from .gsm import ModemClient, ModemError

SMS_QUEUE_MAX = 32


class Mode(str, Enum):
    PARKED = "parked"
    PRE_RIDE = "pre_ride"
    RIDING = "riding"
    CRASH_SUSPECTED = "crash_suspected"
    THEFT_SUSPECTED = "theft_suspected"


@dataclass(frozen=True)
class PendingSms:
    t_ms: int
    to: str
    body: str
    severity: Severity


@dataclass(frozen=True)
class RouterState:
    last_emit: tuple[tuple[AlertKind, int], ...] = ()
    pending_sms: tuple[PendingSms, ...] = ()
    dropped_count: int = 0


def _last_emit_ms(rs: RouterState, kind: AlertKind) -> int | None:
    for k, t in rs.last_emit:
        if k is kind:
            return t
    return None


def _with_emit(rs: RouterState, kind: AlertKind, t_ms: int) -> RouterState:
    kept = tuple((k, t) for k, t in rs.last_emit if k is not kind)
    return replace(rs, last_emit=kept + ((kind, t_ms),))


def _enqueue(rs: RouterState, msg: PendingSms) -> RouterState:
    queue = rs.pending_sms + (msg,)
    dropped = rs.dropped_count
    if len(queue) > SMS_QUEUE_MAX:
        # overflow policy: sacrifice the lowest-severity, oldest entry,
        # which may be the incoming message itself
        victim = min(range(len(queue)), key=lambda i: (queue[i].severity, i))
        queue = queue[:victim] + queue[victim + 1:]
        dropped += 1
    return replace(rs, pending_sms=queue, dropped_count=dropped)


def route(rs: RouterState, trigger: Trigger, t_ms: int,
          cfg: ControllerConfig) -> tuple[RouterState, Alert | None, list[ActuatorCommand]]:
    """Apply the per-kind cooldown, then fan a trigger out to alert/buzzer/SMS."""
    last = _last_emit_ms(rs, trigger.kind)
    if last is not None and t_ms - last < cfg.sms_cooldown_ms:
        return rs, None, []
    sev = severity_of(trigger.kind)
    alert = Alert(t_ms, trigger.kind, sev, trigger.message)
    commands: list[ActuatorCommand] = []
    if sev >= Severity.MEDIUM:
        commands.append(ActuatorCommand(t_ms, Buzzer(on=True)))
    if sev is Severity.HIGH or trigger.kind is AlertKind.BEACON:
        to = cfg.police_number if trigger.kind is AlertKind.CRASH else cfg.owner_number
        body = truncate_sms(trigger.message)
        commands.append(ActuatorCommand(t_ms, SmsSend(to=to, body=body)))
        rs = _enqueue(rs, PendingSms(t_ms, to, body, sev))
    return _with_emit(rs, trigger.kind, t_ms), alert, commands


def drain_sms(rs: RouterState, client: ModemClient) -> tuple[RouterState, int, list[str]]:
    """Send queued messages FIFO until empty or the modem fails.

    On failure the message stays at the head for the next drain; one re-init
    is attempted so a recovered modem picks up where it left off.
    """
    pending = list(rs.pending_sms)
    sent = 0
    failures: list[str] = []
    while pending:
        msg = pending[0]
        try:
            client.send_sms(msg.to, msg.body)
        except ModemError as exc:
            failures.append(str(exc))
            try:
                client.modem_init()
            except ModemError as again:
                failures.append(str(again))
            break
        pending.pop(0)
        sent += 1
    return replace(rs, pending_sms=tuple(pending)), sent, failures


@dataclass
class ControllerState:
    mode: Mode = Mode.PARKED
    last_t_ms: int | None = None
    authorized: bool = False
    ignition_on: bool = False
    last_fix: GpsFix | None = None
    last_speed_kph: float = 0.0
    collision: CollisionState = field(default_factory=CollisionState)
    mag: MagState = field(default_factory=MagState)
    crash: CrashState = field(default_factory=CrashState)
    theft: TheftState = field(default_factory=TheftState)
    overspeed_active: bool = False
    overtake_unsafe: bool = False
    preride_start_ms: int | None = None
    preride_readings: tuple[GasReading, ...] = ()
    router: RouterState = field(default_factory=RouterState)


def _crash_sms_text(fix: GpsFix | None, t_ms: int) -> str:
    if fix is None:
        return f"CRASH unknown t={t_ms}"
    return f"CRASH {fix.point.lat_deg:.6f},{fix.point.lon_deg:.6f} t={t_ms}"


def step(cfg: ControllerConfig, state: ControllerState, t_ms: int,
         events: list[SensorEvent]) -> tuple[ControllerState, list[Alert], list[ActuatorCommand]]:
    """Process all events stamped t_ms and return the follow-on state/outputs."""
    if state.last_t_ms is not None and t_ms < state.last_t_ms:
        raise ContractViolation(f"step at t={t_ms} after t={state.last_t_ms}")
    for ev in events:
        if ev.t_ms != t_ms:
            raise ContractViolation(f"event stamped {ev.t_ms} passed to step at t={t_ms}")

    work = dataclasses.replace(state)
    alerts: list[Alert] = []
    commands: list[ActuatorCommand] = []

    def emit(trigger: Trigger) -> Alert | None:
        rs, alert, cmds = route(work.router, trigger, t_ms, cfg)
        work.router = rs
        if alert is not None:
            alerts.append(alert)
        commands.extend(cmds)
        return alert

    def theft_sync() -> None:
        # re-evaluate arming against the cached fix when ignition/auth change
        if work.last_fix is None or work.mode not in (Mode.PARKED, Mode.THEFT_SUSPECTED):
            return
        work.theft, triggers = theft_step(work.theft, work.last_fix, work.ignition_on,
                                          work.authorized, t_ms, cfg)
        for trig in triggers:
            emit(trig)
            if trig.kind is AlertKind.THEFT and work.mode is Mode.PARKED:
                work.mode = Mode.THEFT_SUSPECTED

    def overtake_eval() -> None:
        side = (work.mag.baseline_ut is not None
                and work.mag.consecutive_deviant >= cfg.mag_persist_samples)
        rear = work.collision.last_ttc_s
        unsafe = overtake_assist(rear, side, cfg)
        if unsafe and not work.overtake_unsafe:
            rear_text = f"{rear:.2f}s" if rear is not None else "none"
            emit(Trigger(AlertKind.OVERTAKE_UNSAFE,
                         f"OVERTAKE UNSAFE side_vehicle={'yes' if side else 'no'} "
                         f"rear_ttc={rear_text}"))
        work.overtake_unsafe = unsafe

    for ev in events:
        p = ev.payload

        if isinstance(p, Auth):
            work.authorized = p.authorized
            if p.authorized:
                work.theft = TheftState()
                if work.mode in (Mode.CRASH_SUSPECTED, Mode.THEFT_SUSPECTED):
                    work.mode = Mode.PARKED
            else:
                theft_sync()

        elif isinstance(p, Ignition):
            work.ignition_on = p.on
            if p.on:
                if work.mode is Mode.PARKED and work.authorized:
                    work.mode = Mode.PRE_RIDE
                    work.preride_start_ms = t_ms
                    work.preride_readings = ()
                elif work.mode in (Mode.PARKED, Mode.THEFT_SUSPECTED) and not work.authorized:
                    commands.append(ActuatorCommand(t_ms, SolenoidLock(engaged=True)))
                    emit(Trigger(AlertKind.THEFT, "THEFT unauthorized ignition attempt"))
                    work.mode = Mode.THEFT_SUSPECTED
            else:
                if work.mode in (Mode.PRE_RIDE, Mode.RIDING):
                    work.mode = Mode.PARKED
                    work.preride_start_ms = None
                    work.preride_readings = ()
                theft_sync()

        elif isinstance(p, GasReading):
            if work.mode is Mode.PRE_RIDE:
                work.preride_readings = work.preride_readings + (p,)
                if t_ms - work.preride_start_ms >= cfg.preride_window_ms:
                    breath = breath_check(work.preride_readings, cfg)
                    leak = gas_leak_check(work.preride_readings, cfg)
                    if breath.passed and leak.safe:
                        work.mode = Mode.RIDING
                        commands.append(ActuatorCommand(t_ms, IgnitionInhibit(on=False)))
                        # new ride: per-ride detector state must not leak across rides
                        work.collision = CollisionState()
                        work.crash = CrashState()
                        work.overspeed_active = False
                        work.overtake_unsafe = False
                    else:
                        work.mode = Mode.PARKED
                        commands.append(ActuatorCommand(t_ms, IgnitionInhibit(on=True)))
                        if not breath.passed:
                            emit(Trigger(AlertKind.ALCOHOL_LOCKOUT,
                                         f"ALCOHOL LOCKOUT peak={breath.peak_ethanol_ppm:.1f}ppm "
                                         f"limit={cfg.ethanol_lockout_ppm:.1f}ppm"))
                        if not leak.safe:
                            emit(Trigger(AlertKind.GAS_LEAK,
                                         f"GAS LEAK lpg={leak.peak_lpg_ppm:.1f}ppm "
                                         f"limit={cfg.lpg_leak_ppm:.1f}ppm"))
                    work.preride_start_ms = None
                    work.preride_readings = ()

        elif isinstance(p, LidarRange):
            if work.mode is Mode.RIDING:
                work.collision, trig = collision_step(work.collision, p.range_m, t_ms, cfg)
                if trig is not None:
                    emit(trig)
                overtake_eval()

        elif isinstance(p, MagField):
            # calibration accrues in every mode; proximity only matters riding
            work.mag, trig = mag_step(work.mag, p.b_ut, cfg)
            if work.mode is Mode.RIDING:
                if trig is not None:
                    emit(trig)
                overtake_eval()

        elif isinstance(p, PirMotion):
            if work.mode is Mode.RIDING:
                trig = hazard_step(p.detected, work.last_speed_kph, cfg)
                if trig is not None:
                    emit(trig)

        elif isinstance(p, Tilt):
            if work.mode is Mode.RIDING:
                work.crash, trig = crash_step(work.crash, p.angle_deg,
                                              work.last_speed_kph, t_ms, cfg)
                if trig is not None:
                    emit(Trigger(AlertKind.CRASH, _crash_sms_text(work.last_fix, t_ms)))
                    work.mode = Mode.CRASH_SUSPECTED

        elif isinstance(p, GpsFix):
            if p.valid:
                work.last_fix = p
                work.last_speed_kph = p.speed_kph
                if work.mode is Mode.RIDING:
                    work.overspeed_active, trig = overspeed_step(
                        work.overspeed_active, p.speed_kph, cfg)
                    if trig is not None:
                        emit(trig)
                elif work.mode in (Mode.PARKED, Mode.THEFT_SUSPECTED):
                    work.theft, triggers = theft_step(work.theft, p, work.ignition_on,
                                                      work.authorized, t_ms, cfg)
                    for trig in triggers:
                        emit(trig)
                        if trig.kind is AlertKind.THEFT and work.mode is Mode.PARKED:
                            work.mode = Mode.THEFT_SUSPECTED

        elif isinstance(p, SupplyVoltage):
            if p.volts < cfg.undervoltage_v:
                emit(Trigger(AlertKind.UNDERVOLTAGE,
                             f"UNDERVOLTAGE {p.volts:.1f}V "
                             f"limit={cfg.undervoltage_v:.1f}V"))

    work.last_t_ms = t_ms
    return work, alerts, commands
