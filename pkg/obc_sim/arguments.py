from __future__ import annotations

from argparse import ArgumentDefaultsHelpFormatter, ArgumentParser

from obc_sim.__about__ import __PROG__ as PROG_NAME
from obc_sim.__about__ import __VERSION__
from obc_sim.compression.cube import CORPUS_KINDS
from obc_sim.faulttol.memory import BANK_LABELS
from obc_sim.scenario import DEFAULT_SCENARIO


class Arguments(ArgumentParser):
    """
    Command line of the simulator.

    Usage Example:
        >>> Arguments().parse_args(['run', '--seed', '3']).seed
        3
    """

    def __init__(self, *args, **kwargs):
        kwargs.setdefault('formatter_class', ArgumentDefaultsHelpFormatter)
        super().__init__(*args, **kwargs)

        self.prog = PROG_NAME.lower()
        self.description = 'Deterministic simulator of a nanosatellite on-board computer'

        self.add_argument(
            '-D', '--debug-mode',
            action='store_true',
            default=False,
            help='Enable debug mode.',
            required=False
        )

        self.add_argument(
            '-q', '--quiet',
            action='store_true',
            default=False,
            help='Silence console logging; only the summary and errors are printed.',
            required=False
        )

        self.add_argument('--version', action='version', version=f'{PROG_NAME} {__VERSION__}')

        commands = self.add_subparsers(dest='command', metavar='COMMAND', required=True, parser_class=ArgumentParser)

        run = commands.add_parser('run', help='Run a scenario.', formatter_class=ArgumentDefaultsHelpFormatter)
        run.add_argument('scenario', nargs='?', default=str(DEFAULT_SCENARIO), help='Scenario file.')
        run.add_argument('--duration', type=float, default=None, help='Simulated seconds; overrides [run] duration.')
        run.add_argument('--seed', type=int, default=None, help='Overrides [run] seed.')
        run.add_argument('--out', default=None, help='Output directory; overrides [run] out.')

        compress = commands.add_parser('compress', help='Losslessly compress a cube file.',
                                       formatter_class=ArgumentDefaultsHelpFormatter)
        compress.add_argument('input', help='Raw BSQ cube with its .hdr sidecar.')
        compress.add_argument('output', help='Encoded stream to write.')
        compress.add_argument('-P', '--prediction-bands', type=int, default=3, help='Previous bands used.')
        compress.add_argument('--weight-resolution', type=int, default=13, help='Predictor weight resolution.')
        compress.add_argument('--update-scaling', type=int, default=6, help='Weight update scaling exponent.')

        decompress = commands.add_parser('decompress', help='Decode a stream back to a cube file.',
                                         formatter_class=ArgumentDefaultsHelpFormatter)
        decompress.add_argument('input', help='Encoded stream.')
        decompress.add_argument('output', help='Raw cube to write; the sidecar goes next to it.')

        synth = commands.add_parser('synth', help='Write a synthetic corpus cube.',
                                    formatter_class=ArgumentDefaultsHelpFormatter)
        synth.add_argument('kind', choices=CORPUS_KINDS, help='Cube content.')
        synth.add_argument('output', help='Raw cube to write; the sidecar goes next to it.')
        synth.add_argument('--width', type=int, default=32)
        synth.add_argument('--height', type=int, default=32)
        synth.add_argument('--bands', type=int, default=16)
        synth.add_argument('--bit-depth', type=int, default=12)
        synth.add_argument('--seed', type=int, default=0)

        ecc = commands.add_parser('ecc', help='Memory bank dump utilities.')
        ecc_commands = ecc.add_subparsers(dest='ecc_command', metavar='ACTION', required=True,
                                         parser_class=ArgumentParser)

        check = ecc_commands.add_parser('check', help='Run one scrub pass over a dump and print the report.')
        check.add_argument('dump', help='Bank dump file.')
        check.add_argument('--repair', action='store_true', help='Write the corrected bank back.')
        check.add_argument('--bad-words', default=None, help='Write the bad-word map as JSONL here.')

        inject = ecc_commands.add_parser('inject', help='Flip bits in a dump.')
        inject.add_argument('dump', help='Bank dump file, rewritten in place.')
        inject.add_argument('flips', help='Comma separated word:bit pairs, bit 0..71.')

        create = ecc_commands.add_parser('create', help='Write a clean bank of random words.',
                                         formatter_class=ArgumentDefaultsHelpFormatter)
        create.add_argument('dump', help='Bank dump file to write.')
        create.add_argument('--words', type=int, default=1024)
        create.add_argument('--seed', type=int, default=0)
        create.add_argument('--label', default='scratch', choices=BANK_LABELS)
