import json

import pytest

from conftest import QUIET_SCENARIO
from obc_sim.__about__ import __VERSION__
from obc_sim.arguments import Arguments
from obc_sim.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main, parse_flips
from obc_sim.compression import HyperspectralCube, synthetic_cube
from obc_sim.errors import DumpError


@pytest.fixture
def bank(tmp_path):
    path = tmp_path / 'bank.ecc'
    assert main(['-q', 'ecc', 'create', str(path), '--words', '16', '--seed', '3']) == EXIT_OK
    return path


def test_version_and_usage_errors(capsys):
    assert main(['--version']) == EXIT_OK
    assert capsys.readouterr().out.strip() == f'OBCSim {__VERSION__}'
    assert main([]) == EXIT_VALIDATION
    assert main(['synth', 'plaid', 'out.raw']) == EXIT_VALIDATION


def test_synth_compress_decompress(tmp_path, capsys):
    raw, stream, back = tmp_path / 'cube.raw', tmp_path / 'cube.obc', tmp_path / 'back.raw'

    assert main(['-q', 'synth', 'gradient', str(raw), '--width', '8', '--height', '6', '--bands', '4']) == EXIT_OK
    assert main(['-q', 'compress', str(raw), str(stream), '-P', '2']) == EXIT_OK
    assert 'ratio=' in capsys.readouterr().out
    assert main(['-q', 'decompress', str(stream), str(back)]) == EXIT_OK

    assert HyperspectralCube.read(back) == synthetic_cube('gradient', 8, 6, 4)
    assert (tmp_path / 'back.raw.hdr').exists()


def test_corrupt_stream_is_a_runtime_fault(tmp_path, capsys):
    junk = tmp_path / 'junk.obc'
    junk.write_bytes(b'not a stream at all')

    assert main(['-q', 'decompress', str(junk), str(tmp_path / 'out.raw')]) == EXIT_RUNTIME
    assert 'byte offset 0' in capsys.readouterr().err


def test_missing_cube_is_a_runtime_fault(tmp_path):
    assert main(['-q', 'compress', str(tmp_path / 'absent.raw'), str(tmp_path / 'x.obc')]) == EXIT_RUNTIME


def test_each_parser_returns_a_fresh_namespace():
    parser = Arguments()
    first = parser.parse_args(['run', '--seed', '3'])
    second = parser.parse_args(['-D', 'ecc', 'create', 'bank.ecc'])

    assert (first.seed, first.debug_mode) == (3, False)
    assert second.debug_mode and second.words == 1024
    assert not hasattr(parser, 'args')


def test_parse_flips():
    assert parse_flips('0:5, 3:70') == [(0, 5), (3, 70)]
    with pytest.raises(DumpError):
        parse_flips('0-5')
    with pytest.raises(DumpError):
        parse_flips('a:b')


def test_ecc_inject_then_check_corrects(bank, capsys):
    assert main(['-q', 'ecc', 'inject', str(bank), '0:5, 3:70']) == EXIT_OK
    capsys.readouterr()

    assert main(['-q', 'ecc', 'check', str(bank), '--repair']) == EXIT_OK
    assert 'corrected=2 uncorrectable=0 words=16' in capsys.readouterr().out

    assert main(['-q', 'ecc', 'check', str(bank)]) == EXIT_OK
    assert 'corrected=0 uncorrectable=0' in capsys.readouterr().out


def test_ecc_double_flip_lands_in_the_bad_word_map(bank, tmp_path, capsys):
    bad = tmp_path / 'bad.jsonl'
    assert main(['-q', 'ecc', 'inject', str(bank), '7:1,7:60']) == EXIT_OK
    assert main(['-q', 'ecc', 'check', str(bank), '--bad-words', str(bad)]) == EXIT_OK

    assert 'uncorrectable=1' in capsys.readouterr().out
    assert [json.loads(line)['word'] for line in bad.read_text().splitlines()] == [7]


@pytest.mark.parametrize('flips', ['16:0', '0:72', 'nonsense'])
def test_ecc_inject_rejects_bad_flips(bank, flips):
    before = bank.read_bytes()
    assert main(['-q', 'ecc', 'inject', str(bank), flips]) == EXIT_VALIDATION
    assert bank.read_bytes() == before


def test_ecc_check_rejects_a_damaged_dump(bank):
    bank.write_bytes(bank.read_bytes()[:-3])
    assert main(['-q', 'ecc', 'check', str(bank)]) == EXIT_VALIDATION


def test_run_writes_outputs(tmp_path, capsys):
    scenario = tmp_path / 'quiet.scn'
    scenario.write_text(QUIET_SCENARIO)
    out = tmp_path / 'out'

    assert main(['-q', 'run', str(scenario), '--duration', '5', '--seed', '2', '--out', str(out)]) == EXIT_OK

    printed = capsys.readouterr().out
    assert 'Run summary' in printed and 'seed 2' in printed
    records = [json.loads(line) for line in (out / 'telemetry.jsonl').read_text().splitlines()]
    assert records[0]['type'] == 'boot'
    assert max(rec['t'] for rec in records) <= 5_000
    assert (out / 'telemetry-memory.jsonl').exists()
    assert (out / 'bad-words.jsonl').read_text() == ''


def test_run_rejects_an_invalid_scenario(tmp_path, capsys):
    scenario = tmp_path / 'broken.scn'
    scenario.write_text(QUIET_SCENARIO + '[task sloppy]\nperiod = -5\n')

    assert main(['-q', 'run', str(scenario)]) == EXIT_VALIDATION
    assert '[task sloppy] period' in capsys.readouterr().err
