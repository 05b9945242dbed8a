from obc_sim.faulttol.boot import BootChoice, BootImageStore, select_boot_image
from obc_sim.faulttol.config import ConfigMemory, scrub_config
from obc_sim.faulttol.ecc import CodeWord, DecodeResult, DecodeStatus, ecc_decode, ecc_encode
from obc_sim.faulttol.injector import FAULT_KINDS, FaultEvent, FaultInjector, inject_faults
from obc_sim.faulttol.memory import MemoryBank, ScrubReport, scrub_memory
from obc_sim.faulttol.tmr import Disagreement, Vote, tmr_compute, tmr_vote
