"""
Counter-based random streams.

Every stream is a Philox generator keyed by (seed, channel) whose counter
starts at a block-specific offset, so slice z of channel c always sees the
same numbers whatever the worker count.
"""

from enum import IntEnum

import numpy as np

MASK64 = (1 << 64) - 1


class Channel(IntEnum):
	V0 = 0
	V_HALF_PI = 1
	V_PI = 2
	V_THREE_HALF_PI = 3
	INTENSITY = 4
	DECAY = 5
	GENERIC = 6
	KMEANS = 7
	TRAIN = 8
	PHANTOM = 9


def stream(seed, channel=Channel.GENERIC, block=0, frame=0):
	key = (int(seed) & MASK64) | (int(channel) << 64)
	counter = np.array([0, int(frame), int(block), 0], dtype=np.uint64)
	return np.random.Generator(np.random.Philox(key=key, counter=counter))
