import pytest

from obc_sim.errors import ConfigurationError, SchedulingError
from obc_sim.simkernel import Event, EventKind, SimKernel


def test_events_fire_in_time_then_insertion_order(kernel):
    order = []
    for t, name in [(5, 'a'), (3, 'b'), (5, 'c'), (3, 'd')]:
        kernel.schedule_event(t, Event(t, payload=name, handler=lambda ev: order.append(ev.payload)))

    fired = kernel.advance_until(10)

    assert order == ['b', 'd', 'a', 'c']
    assert [ev.payload for ev in fired] == order
    assert kernel.now == 10


def test_clock_is_set_to_each_event_before_its_handler(kernel):
    seen = []
    kernel.post(7, lambda ev: seen.append(kernel.now))
    kernel.post(2, lambda ev: seen.append(kernel.now))

    kernel.advance_until(100)

    assert seen == [2, 7]


def test_scheduling_in_the_past_is_rejected(kernel):
    kernel.advance_until(50)

    with pytest.raises(SchedulingError):
        kernel.schedule_event(49, Event(49))
    with pytest.raises(SchedulingError):
        kernel.advance_until(10)


def test_scheduling_at_the_current_tick_fires_in_the_same_advance(kernel):
    seen = []

    def first(ev):
        kernel.schedule_event(kernel.now, Event(kernel.now, EventKind.SIGNAL, handler=lambda e: seen.append(kernel.now)))

    kernel.post(4, first)
    kernel.advance_until(4)

    assert seen == [4]


def test_advance_with_empty_queue_only_moves_the_clock(kernel):
    assert kernel.advance_until(1234) == []
    assert kernel.now == 1234


def test_advance_to_the_current_tick_is_allowed(kernel):
    kernel.advance_until(10)
    assert kernel.advance_until(10) == []


def test_cancelled_events_never_fire(kernel):
    fired = []
    keep = kernel.post(5, lambda ev: fired.append('keep'))
    drop = kernel.post(5, lambda ev: fired.append('drop'))

    assert kernel.cancel(drop)
    assert not kernel.cancel(drop)
    assert not kernel.cancel(None)
    events = kernel.advance_until(10)

    assert fired == ['keep']
    assert [ev.seq for ev in events] == [keep]
    assert kernel.stats.cancelled == 1
    assert not kernel.cancel(keep)


def test_interrupt_runs_handler_immediately(kernel):
    calls = []
    kernel.register_interrupt(3, lambda line, payload: calls.append((kernel.now, line.line_id, payload)))

    kernel.post(8, lambda ev: kernel.raise_interrupt(3, 'edge'))
    kernel.advance_until(10)

    assert calls == [(8, 3, 'edge')]
    assert kernel.stats.interrupts_delivered == 1


def test_unregistered_interrupt_is_counted_as_lost(kernel):
    assert kernel.raise_interrupt(99) is False
    assert kernel.stats.lost_interrupts == 1


def test_line_can_only_be_registered_once(kernel):
    kernel.register_interrupt(1, lambda line, payload: None)
    with pytest.raises(ConfigurationError):
        kernel.register_interrupt(1, lambda line, payload: None)


def test_masked_interrupts_are_delivered_in_registration_order(kernel):
    order = []
    kernel.register_interrupt(7, lambda line, payload: order.append(7))
    kernel.register_interrupt(2, lambda line, payload: order.append(2))

    with kernel.interrupts_masked():
        kernel.raise_interrupt(2)
        kernel.raise_interrupt(7)
        assert order == []

    assert order == [7, 2]


def test_interrupt_raised_inside_a_handler_is_delivered_after_it(kernel):
    order = []

    def first(line, payload):
        kernel.raise_interrupt(2)
        order.append('first done')

    kernel.register_interrupt(1, first)
    kernel.register_interrupt(2, lambda line, payload: order.append('second'))
    kernel.raise_interrupt(1)

    assert order == ['first done', 'second']


def test_same_seed_free_runs_are_identical():
    def trace():
        kernel = SimKernel()
        out = []

        def tick(ev):
            out.append(kernel.now)
            if kernel.now < 500:
                kernel.post(37, tick)

        kernel.post(0, tick)
        kernel.advance_until(1000)
        return out

    assert trace() == trace()
