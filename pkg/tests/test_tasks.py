import math
import warnings
from types import SimpleNamespace

import numpy as np
import pytest

from obc_sim.compression import decode, synthetic_cube
from obc_sim.computer import OnBoardComputer
from obc_sim.devices import IMAGE_STORE
from obc_sim.devices.i2c import DeviceFault
from obc_sim.errors import ConfigurationError, StreamError
from obc_sim.flightplan import ExitStatus, TaskSpec
from obc_sim.fsm import Mode
from obc_sim.tasks import (
    TASK_BODIES,
    BdotState,
    DownlinkQueue,
    HousekeepingRecord,
    SensorCache,
    bdot_command,
    deframe,
    frame,
    task_body,
    validate_bodies,
)
from obc_sim.tasks.control import bdot_control
from obc_sim.tasks.downlink import PAYLOAD_SIZE, downlink_prep
from obc_sim.tasks.housekeeping import (
    BEACON_SIZE,
    VALID_ALL,
    VALID_GYRO,
    pack_beacon,
    unpack_beacon,
)
from obc_sim.tasks.imaging import STORED_HEADER, ImagingPhase
from obc_sim.tasks.maintenance import config_scrub, memory_scrub, self_check

IMAGING = """
[task imaging-sequence]
period = 2000
duration = 600
grace = 1000

[mode Imaging]
tasks = housekeeping, imaging-sequence

[command shoot]
at = 1
mode = Imaging
"""

SMALL_IMAGE = {'imaging': {'preload': 'yes', 'width': '8', 'height': '8', 'bands': '4'}}


def at(t):
    return SimpleNamespace(now=t)


@pytest.fixture
def obc(quiet_scenario):
    return OnBoardComputer(quiet_scenario())


# Registry ---------------------------------------------------------------------------------------

def test_every_default_task_has_a_body(default_scenario):
    validate_bodies(default_scenario.modes.all_task_specs())
    assert {'housekeeping', 'bdot-control', 'imaging-sequence', 'downlink-prep'} <= set(TASK_BODIES)


def test_unknown_body_is_rejected():
    with pytest.raises(ConfigurationError, match='unknown body'):
        validate_bodies([TaskSpec('x', 100, 'teleport')])


def test_a_body_id_registers_once():
    with pytest.raises(ConfigurationError):
        task_body('housekeeping')(lambda ctx, handle: ExitStatus.OK)


# Control ----------------------------------------------------------------------------------------

def test_bdot_first_call_commands_zero_then_opposes_the_field_rate():
    state = BdotState(gain=1.0)
    assert bdot_command(state, np.array([1e-5, 0.0, 0.0]), 0, 0.2).tolist() == [0.0, 0.0, 0.0]

    duty = bdot_command(state, np.array([2e-5, 0.0, 0.0]), 100, 0.2)
    np.testing.assert_allclose(duty, [-5e-4, 0.0, 0.0])


def test_bdot_duty_is_clamped_per_axis():
    state = BdotState(gain=1e6)
    bdot_command(state, np.zeros(3), 0, 0.2)
    duty = bdot_command(state, np.array([1e-5, -1e-5, 1e-9]), 100, 0.2)

    assert duty[0] == -1.0
    assert duty[1] == 1.0
    assert -1.0 < duty[2] < 0.0


def test_bdot_gain_cannot_be_negative():
    with pytest.raises(ValueError):
        BdotState(gain=-1.0)


def test_bdot_body_holds_zero_on_a_magnetometer_fault(obc):
    obc.ctx.bdot.prev_b, obc.ctx.bdot.prev_time = np.ones(3), 0
    obc.hw.i2c_device('magnetometer').fault = DeviceFault.NACK
    obc.hw.actuators.set_magnetorquer((0.5, 0.5, 0.5))

    assert bdot_control(obc.ctx, at(100)) is ExitStatus.OK
    assert obc.hw.actuators.total_duty == 0.0
    assert obc.ctx.bdot.prev_b is None
    assert obc.telemetry.last('bdot')['valid'] is False


# Housekeeping -----------------------------------------------------------------------------------

def test_housekeeping_record_survives_nan_fields():
    record = HousekeepingRecord(4200, Mode.RECOVERY, valid=VALID_ALL & ~VALID_GYRO, bus_fault_flags=2,
                                battery_soc=0.5, omega=(math.nan,) * 3, temperatures=(20.5, math.nan))
    assert HousekeepingRecord.unpack(record.pack()) == record


def test_beacon_is_fixed_size():
    blob = pack_beacon(7000, Mode.SAFE_LOW_POWER, 0x21, 0.25, 0.01)
    assert len(blob) == BEACON_SIZE
    assert unpack_beacon(blob) == {'type': 2, 't': 7000, 'mode': Mode.SAFE_LOW_POWER, 'flags': 0x21,
                                   'battery_soc': 0.25, 'omega_mag': 0.01}


def test_sensor_cache_keeps_last_valid_temperatures():
    cache = SensorCache()
    cache.update_temperatures((21.0, 26.0))
    cache.update_temperatures((math.nan, math.nan))
    assert cache.temperatures == (21.0, 26.0)

    cache.reset()
    assert cache.temperatures == ()
    assert np.isnan(cache.omega).all()


def test_housekeeping_records_land_in_telemetry_memory(quiet_scenario):
    obc = OnBoardComputer(quiet_scenario())
    obc.run(3_500)

    records = [HousekeepingRecord.unpack(blob) for _, blob in obc.hw.telemetry_memory.records_since(0)
               if blob[0] == 1]
    assert [rec.timestamp for rec in records] == [0, 1000, 2000, 3000]
    assert all(rec.mode is Mode.NOMINAL and rec.valid == VALID_ALL for rec in records)
    assert records[-1].battery_soc == pytest.approx(obc.hw.eps.battery_soc, abs=1e-3)


def test_housekeeping_flags_a_failed_sensor(quiet_scenario):
    obc = OnBoardComputer(quiet_scenario())
    obc.hw.i2c_device('gyro').fault = DeviceFault.NACK
    obc.run(500)

    _, blob = obc.hw.telemetry_memory.records_since(0)[-1]
    record = HousekeepingRecord.unpack(blob)
    assert not record.valid & VALID_GYRO
    assert all(math.isnan(w) for w in record.omega)
    assert record.bus_fault_flags


# Downlink ---------------------------------------------------------------------------------------

def test_framing_splits_into_fixed_packets():
    data = bytes(range(256)) * 4
    packets = frame(data, first_seq=65535)

    assert len(packets) == -(-len(data) // PAYLOAD_SIZE)
    assert {len(p) for p in packets} == {256}
    assert deframe(packets) == data
    assert packets[1][:2] == b'\x00\x00'


def test_deframe_detects_corruption():
    packets = frame(b'telemetry')
    damaged = bytearray(packets[0])
    damaged[10] ^= 0x40

    with pytest.raises(StreamError, match='CRC'):
        deframe([bytes(damaged)])
    with pytest.raises(StreamError):
        deframe([packets[0][:100]])


def test_downlink_prep_frames_telemetry_then_image(obc):
    access = obc.access
    for i in range(3):
        access.write_telemetry(bytes([9, i]))
    image = bytes(range(200)) * 5
    obc.hw.image_store.program(0, image)
    obc.ctx.downlink.queue_image(len(image))

    assert downlink_prep(obc.ctx, at(0)) is ExitStatus.OK

    packets = [packet for _, packet in obc.hw.downlink_memory.records_since(0)]
    telemetry = b''.join(bytes([2, 9, i]) for i in range(3))
    assert deframe(packets) == telemetry + image
    assert obc.ctx.downlink.backlog == 0
    assert obc.ctx.downlink.telemetry_cursor == 3
    assert obc.telemetry.last('downlink')['records'] == 3


def test_downlink_backlog_spans_activations(obc):
    obc.ctx.downlink.packets_per_activation = 2
    image = bytes(1000)
    obc.hw.image_store.program(0, image)
    obc.ctx.downlink.queue_image(len(image))

    downlink_prep(obc.ctx, at(0))
    assert obc.ctx.downlink.backlog == 1000 - 2 * PAYLOAD_SIZE
    downlink_prep(obc.ctx, at(1000))
    downlink_prep(obc.ctx, at(2000))

    assert obc.ctx.downlink.backlog == 0
    packets = [packet for _, packet in obc.hw.downlink_memory.records_since(0)]
    assert deframe(packets) == image


def test_downlink_queue_backlog():
    queue = DownlinkQueue()
    queue.queue_image(600)
    queue.image_offset = 100
    assert queue.backlog == 500


# Maintenance ------------------------------------------------------------------------------------

def test_memory_scrub_corrects_and_reports(obc):
    obc.hw.image_store.storage.flip(3, 11)
    obc.hw.telemetry_memory.bank.flip(0, 70)

    memory_scrub(obc.ctx, at(10))

    scrub = obc.telemetry.last('scrub')
    assert (scrub['target'], scrub['corrected'], scrub['uncorrectable']) == ('memory', 2, 0)
    assert obc.ctx.scrub_totals['memory'].corrected == 2


def test_config_scrub_reports_divergence(obc):
    for bit in (1, 2, 3):
        obc.hw.config_memory.flip_absolute(bit)

    config_scrub(obc.ctx, at(10))

    scrub = obc.telemetry.last('scrub')
    assert (scrub['divergence_before'], scrub['divergence_after']) == (3, 0)
    assert obc.hw.config_memory.divergence == 0


def test_scrubbing_can_be_disabled(quiet_scenario):
    obc = OnBoardComputer(quiet_scenario({'faults': {'scrub': 'no'}}))
    obc.hw.image_store.storage.flip(0, 0)

    memory_scrub(obc.ctx, at(10))

    assert obc.telemetry.last('scrub') is None
    assert obc.hw.image_store.storage.codeword(0).data == 1


def test_self_check_needs_a_gyro_and_a_boot_image(obc):
    assert self_check(obc.ctx, at(0)) is ExitStatus.OK
    assert obc.ctx.self_check_passes == 1

    obc.hw.i2c_device('gyro').fault = DeviceFault.NACK
    assert self_check(obc.ctx, at(1000)) is ExitStatus.FAILED
    assert obc.ctx.self_check_passes == 1
    assert obc.telemetry.last('self-check')['gyro_ok'] is False


# Imaging ----------------------------------------------------------------------------------------

def test_imaging_pipeline_stores_a_decodable_image(quiet_scenario):
    obc = OnBoardComputer(quiet_scenario(SMALL_IMAGE, IMAGING))
    obc.run(5_000)

    phases = [rec['phase'] for rec in obc.telemetry.of_type('imaging')]
    assert phases == ['reading', 'encoding', 'writing', 'done']
    assert obc.ctx.imaging.phase is ImagingPhase.DONE
    assert obc.ctx.imaging.pending_images == 0

    store = obc.hw.flash(IMAGE_STORE)
    length, checksum = STORED_HEADER.unpack(store.read(0, STORED_HEADER.size))
    blob = store.read(STORED_HEADER.size, length)
    assert decode(blob) == synthetic_cube('gradient', 8, 8, 4, 12)
    assert obc.telemetry.of_type('imaging')[2]['checksum_ok'] is True
    assert obc.ctx.downlink.backlog == STORED_HEADER.size + length


def test_imaging_phase_reads_without_deprecation_warnings(quiet_scenario):
    obc = OnBoardComputer(quiet_scenario(SMALL_IMAGE, IMAGING))
    obc.run(5_000)

    with warnings.catch_warnings():
        warnings.simplefilter('error', DeprecationWarning)
        assert obc.ctx.imaging.phase is ImagingPhase.DONE
        assert not obc.ctx.imaging.active


def test_imaging_without_a_raw_image_exits_immediately(quiet_scenario):
    obc = OnBoardComputer(quiet_scenario(None, IMAGING))
    obc.run(3_000)

    assert obc.telemetry.of_type('imaging') == []
    assert obc.flightplan.record('imaging-sequence').last_exit is ExitStatus.OK


def test_imaging_aborts_on_a_camera_flash_timeout(quiet_scenario):
    extra = IMAGING + """
[fault flash-timeout]
at = 0.5
kind = spi-timeout
target = camera-flash
"""
    obc = OnBoardComputer(quiet_scenario(SMALL_IMAGE, extra))
    obc.run(1_500)

    last = obc.telemetry.last('imaging')
    assert last['phase'] == 'aborted'
    assert 'camera flash read aborted' in last['reason']
    assert obc.ctx.imaging.pending_images == 1
    assert obc.flightplan.record('imaging-sequence').last_exit is ExitStatus.FAILED
