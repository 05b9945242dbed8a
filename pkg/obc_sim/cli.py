"""
Command-line harness: scenario runs plus the standalone codec and ECC utilities.

Exit codes: 0 success, 2 validation error, 3 runtime fault.
"""
from __future__ import annotations

import logging
import sys
from argparse import Namespace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from rich.console import Console
from rich.table import Table

from obc_sim.arguments import Arguments
from obc_sim.compression.cube import HyperspectralCube, synthetic_cube
from obc_sim.compression.stream import decode, encode
from obc_sim.computer import OnBoardComputer, RunSummary
from obc_sim.errors import CompressionError, ConfigurationError, DumpError
from obc_sim.faulttol.ecc import CODE_BITS
from obc_sim.faulttol.memory import MemoryBank, scrub_memory
from obc_sim.helpers import ROOT_LOGGER, SuppressLogging, get_logger, setup_logging
from obc_sim.scenario import load_scenario

log = get_logger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def exit_on_error(reason: Optional[str] = None, code: int = EXIT_RUNTIME) -> int:
    """
    Report a fatal error on stderr.

    Parameters:
        reason (str): The reason for the error. If not provided, it defaults to 'Unknown error.'
        code (int): The exit code to hand back.

    Returns:
        int: ``code``, for :func:`main` to return.
    """
    if not reason:
        reason = 'Unknown error.'
    sys.stderr.write(f'ERROR: {reason} | Exiting.\n')
    return code


def _console() -> Console:
    return Console(highlight=False, soft_wrap=True)


# Run --------------------------------------------------------------------------------------------

def render_summary(summary: RunSummary, paths: Optional[Dict[str, Path]] = None) -> Table:
    table = Table(title=f'Run summary (t={summary.t / 1000:.1f} s, seed {summary.seed})', show_header=False)
    table.add_column('item', style='bold')
    table.add_column('value')

    timeline = [f'{t / 1000:.1f}s {previous} -> {mode} ({reason})' for t, previous, mode, reason in summary.timeline]
    table.add_row('final mode', summary.final_mode)
    table.add_row('mode timeline', '\n'.join(timeline) or 'none')
    table.add_row('boots', '\n'.join(f'{t / 1000:.1f}s {image} ({cause})' for t, image, cause in summary.boots))
    table.add_row('power cycles', str(summary.power_cycles))
    table.add_row('hardware kicks', str(summary.hw_kicks))
    table.add_row('kills', _counts(summary.kills))
    table.add_row('overruns', _counts(summary.overruns))
    table.add_row('memory scrub', str(summary.memory_scrub))
    table.add_row('config scrub', f'divergence corrected={summary.config_scrub.corrected}')
    table.add_row('upsets injected', str(summary.upsets))
    ratios = ', '.join(f'{ratio:.2f}' for ratio in summary.compression_ratios)
    table.add_row('compression ratios', ratios or 'none')
    table.add_row('|omega|', f'{summary.omega_mag:.4f} rad/s')
    table.add_row('battery', f'{summary.battery_soc:.3f}')
    table.add_row('anomalies', str(summary.anomalies))
    for name, path in (paths or {}).items():
        table.add_row(name, str(path))
    return table


def _counts(counts: Dict[str, int]) -> str:
    return ', '.join(f'{name}={n}' for name, n in sorted(counts.items())) or 'none'


def run_command(args: Namespace) -> int:
    overrides = {}
    if args.duration is not None:
        overrides['duration'] = args.duration
    if args.seed is not None:
        overrides['seed'] = args.seed
    if args.out is not None:
        overrides['out'] = args.out

    scenario = load_scenario(args.scenario, {'run': overrides} if overrides else None)
    obc = OnBoardComputer(scenario)
    summary = obc.run()
    paths = obc.write_outputs(scenario.run.out)
    _console().print(render_summary(summary, paths))
    return EXIT_OK


# Codec ------------------------------------------------------------------------------------------

def compress_command(args: Namespace) -> int:
    cube = HyperspectralCube.read(args.input)
    stream = encode(cube, args.prediction_bands, args.weight_resolution, args.update_scaling)
    Path(args.output).write_bytes(stream.to_bytes())
    _console().print(f'{args.input}: {len(cube.to_raw())} -> {(stream.length + 7) // 8} bytes, '
                     f'ratio={stream.ratio:.3f}')
    return EXIT_OK


def decompress_command(args: Namespace) -> int:
    cube = decode(Path(args.input).read_bytes())
    cube.write(args.output)
    _console().print(f'{args.output}: {cube.width}x{cube.height}x{cube.bands} @ {cube.bit_depth} bit')
    return EXIT_OK


def synth_command(args: Namespace) -> int:
    cube = synthetic_cube(args.kind, args.width, args.height, args.bands, args.bit_depth, args.seed)
    cube.write(args.output)
    _console().print(f'{args.output}: {args.kind} cube {cube.width}x{cube.height}x{cube.bands}')
    return EXIT_OK


# ECC --------------------------------------------------------------------------------------------

def parse_flips(text: str) -> List[Tuple[int, int]]:
    """
    Parse ``word:bit[,word:bit...]``.

    Usage Example:
        >>> parse_flips('0:5, 3:70')
        [(0, 5), (3, 70)]
    """
    flips = []
    for item in text.split(','):
        word, sep, bit = item.strip().partition(':')
        if not sep:
            raise DumpError(f'expected word:bit, got {item.strip()!r}')
        try:
            flips.append((int(word), int(bit)))
        except ValueError:
            raise DumpError(f'expected integers in {item.strip()!r}') from None
    return flips


def ecc_check(args: Namespace) -> int:
    bank = MemoryBank.load(args.dump)
    report = scrub_memory(bank)
    _console().print(str(report))
    if args.repair:
        bank.dump(args.dump)
    if args.bad_words:
        bank.write_bad_words(args.bad_words)
    return EXIT_OK


def ecc_inject(args: Namespace) -> int:
    bank = MemoryBank.load(args.dump)
    flips = parse_flips(args.flips)
    for word, bit in flips:
        if not 0 <= word < len(bank):
            raise DumpError(f'word {word} outside 0..{len(bank) - 1}')
        if not 0 <= bit < CODE_BITS:
            raise DumpError(f'bit {bit} outside 0..{CODE_BITS - 1}')
    for word, bit in flips:
        bank.flip(word, bit)
    bank.dump(args.dump)
    _console().print(f'flipped {len(flips)} bit(s) in {args.dump}')
    return EXIT_OK


def ecc_create(args: Namespace) -> int:
    if args.words <= 0:
        raise DumpError('a bank needs at least one word')
    MemoryBank.random(args.words, args.seed, args.label).dump(args.dump)
    _console().print(f'{args.dump}: {args.words} clean words')
    return EXIT_OK


ECC_COMMANDS: Dict[str, Callable[[Namespace], int]] = {
    'check': ecc_check,
    'inject': ecc_inject,
    'create': ecc_create,
}


def ecc_command(args: Namespace) -> int:
    return ECC_COMMANDS[args.ecc_command](args)


COMMANDS: Dict[str, Callable[[Namespace], int]] = {
    'run': run_command,
    'compress': compress_command,
    'decompress': decompress_command,
    'synth': synth_command,
    'ecc': ecc_command,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = Arguments().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (None, 0) else EXIT_VALIDATION

    setup_logging(args.debug_mode)
    if args.debug_mode:
        log.debug(f'arguments: {vars(args)}')

    command = COMMANDS[args.command]
    try:
        if args.quiet:
            with SuppressLogging(ROOT_LOGGER, logging.CRITICAL):
                return command(args)
        return command(args)
    except (ConfigurationError, DumpError, ValueError) as e:
        return exit_on_error(str(e), EXIT_VALIDATION)
    except (CompressionError, OSError) as e:
        return exit_on_error(str(e), EXIT_RUNTIME)
