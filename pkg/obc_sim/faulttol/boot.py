"""
Boot image selection: primary image in flash, fallback image in EEPROM.
"""
from __future__ import annotations

import zlib
from enum import Enum
from typing import Optional

import numpy as np

from obc_sim.helpers import get_logger

log = get_logger(__name__)


class BootChoice(Enum):
    PRIMARY = 'primary'
    FALLBACK = 'fallback'


def _synthetic_image(size: int, seed: int) -> bytes:
    return np.random.default_rng(seed).integers(0, 256, size=size, dtype=np.uint8).tobytes()


class BootImageStore:
    """
    The two boot images of the OBC with their CRC-32 checksums.

    The primary image and its checksum sit in flash and can be upset. The
    fallback lives in EEPROM, is fixed at construction and is treated as
    immune to upsets.

    Parameters:
        image (bytes, optional): Image contents; a seeded synthetic image of
            ``size`` bytes when omitted.
        size (int): Synthetic image size in bytes.
        seed (int): Seed for the synthetic image.
    """

    label = 'boot-flash'

    def __init__(self, image: Optional[bytes] = None, size: int = 4096, seed: int = 0):
        image = bytes(image) if image is not None else _synthetic_image(size, seed)
        checksum = zlib.crc32(image)

        self.primary = bytearray(image)
        self.primary_checksum = checksum
        self.__fallback = bytes(image)
        self.__fallback_checksum = checksum
        self.last_choice: Optional[BootChoice] = None
        self.boots = 0

    @property
    def fallback(self) -> bytes:
        return self.__fallback

    @property
    def fallback_checksum(self) -> int:
        return self.__fallback_checksum

    @property
    def primary_valid(self) -> bool:
        return zlib.crc32(self.primary) == self.primary_checksum

    @property
    def fallback_valid(self) -> bool:
        return zlib.crc32(self.__fallback) == self.__fallback_checksum

    @property
    def bit_count(self) -> int:
        return len(self.primary) * 8 + 32

    @property
    def megabits(self) -> float:
        return self.bit_count / 1e6

    def flip_absolute(self, position: int) -> None:
        """Upset one bit of the primary image; positions past the image hit its checksum."""
        image_bits = len(self.primary) * 8
        if position < image_bits:
            self.primary[position // 8] ^= 1 << (position % 8)
        else:
            self.corrupt_checksum(position - image_bits)

    def corrupt_checksum(self, bit: int = 0) -> None:
        self.primary_checksum ^= 1 << (bit % 32)


def select_boot_image(store: BootImageStore) -> BootChoice:
    """
    Choose the image to boot from on every (re)boot.

    The primary is used iff its checksum validates. Otherwise the EEPROM
    fallback is used, even when it fails validation too.
    """
    store.boots += 1
    if store.primary_valid:
        choice = BootChoice.PRIMARY
        log.info('Booting from primary image')
    else:
        choice = BootChoice.FALLBACK
        if store.fallback_valid:
            log.warning('Primary boot image failed its checksum; booting from EEPROM fallback')
        else:
            log.critical('Both boot images failed their checksums; booting from EEPROM fallback anyway')

    store.last_choice = choice
    return choice
