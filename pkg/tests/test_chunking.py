import numpy as np
import pytest

from renewal_lab.chunking import ChunkPlan, chunk_generator, run_chunks
from renewal_lab.errors import ValidationFailure


def test_chunk_layout():
    chunks = ChunkPlan(10, 4).chunks()
    assert [c.size for c in chunks] == [4, 4, 2]
    assert [c.offset for c in chunks] == [0, 4, 8]
    assert all(c.total_chunks == 3 for c in chunks)
    assert ChunkPlan(0, 4).chunks() == []


def test_plan_validation():
    with pytest.raises(ValidationFailure) as info:
        ChunkPlan(-1, 4)
    assert info.value.field_path == "samples"
    with pytest.raises(ValidationFailure) as info:
        ChunkPlan(10, 0)
    assert info.value.field_path == "chunk_size"


def test_generators_are_keyed():
    a = chunk_generator(5, 0, 1).random(4)
    assert np.array_equal(a, chunk_generator(5, 0, 1).random(4))
    assert not np.array_equal(a, chunk_generator(5, 0, 2).random(4))
    assert not np.array_equal(a, chunk_generator(5, 1, 1).random(4))
    assert not np.array_equal(a, chunk_generator(6, 0, 1).random(4))


@pytest.mark.parametrize("threads", [2, 4])
def test_results_do_not_depend_on_threads(threads):
    plan = ChunkPlan(1000, 64)

    def work(rng, chunk):
        return rng.random(chunk.size).sum()

    serial = run_chunks(plan, 11, work, threads=1)
    parallel = run_chunks(plan, 11, work, threads=threads)
    assert len(serial) == 16
    assert serial == parallel
