"""
Memory scrubbing and the post-boot self check.
"""
from __future__ import annotations

from obc_sim.errors import BusError
from obc_sim.flightplan import ExitStatus, TaskHandle
from obc_sim.helpers import get_logger
from obc_sim.tasks.registry import TaskContext, task_body

log = get_logger(__name__)


@task_body('memory-scrub')
def memory_scrub(ctx: TaskContext, handle: TaskHandle) -> ExitStatus:
    """One read-correct-rewrite pass over every ECC-protected bank."""
    if not ctx.scrub_enabled:
        return ExitStatus.OK

    report = ctx.access.scrub_memories(handle.now)
    ctx.scrub_totals['memory'] += report
    ctx.telemetry.emit('scrub', handle.now, target='memory', corrected=report.corrected,
                       uncorrectable=report.uncorrectable, words=report.words_scanned)
    if report.uncorrectable:
        log.warning(f'Scrub found {report.uncorrectable} uncorrectable word(s) at t={handle.now}')
    return ExitStatus.OK


@task_body('config-scrub')
def config_scrub(ctx: TaskContext, handle: TaskHandle) -> ExitStatus:
    """Rewrite the FPGA bitstream from its golden copy."""
    if not ctx.scrub_enabled:
        return ExitStatus.OK

    report = ctx.access.scrub_config(handle.now)
    ctx.scrub_totals['config'] += report
    ctx.telemetry.emit('scrub', handle.now, target='config', divergence_before=report.corrected,
                       divergence_after=ctx.access.config_divergence())
    return ExitStatus.OK


@task_body('self-check')
def self_check(ctx: TaskContext, handle: TaskHandle) -> ExitStatus:
    """
    Recovery-mode health check: at least one boot image must validate and
    the gyro must answer.
    """
    primary, fallback = ctx.access.boot_status()
    gyro_ok = True
    try:
        ctx.sensors.update_omega(ctx.access.read_gyro())
    except BusError as e:
        gyro_ok = False
        log.warning(f'Self check: {e}')

    passed = (primary or fallback) and gyro_ok
    if passed:
        ctx.self_check_passes += 1
    ctx.telemetry.emit('self-check', handle.now, passed=passed, primary_valid=primary, fallback_valid=fallback,
                       gyro_ok=gyro_ok, passes=ctx.self_check_passes)
    return ExitStatus.OK if passed else ExitStatus.FAILED
