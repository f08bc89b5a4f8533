"""Deterministic cooperative scheduler, per-key locks, and the event trace.

Activities (resolver queries, attacker scripts, clients) are generators that
yield effect tuples instead of blocking:

    ("acquire", key)            block until the lock on key is granted
    ("release", key)            release a held lock
    ("rpc", server, query)      deliver a query to a server, get the response
    ("choose", label, options)  ask the scheduler to pick one option
    ("pause",)                  bare reschedule point

The scheduler advances one runnable activity per step, picked by a seeded
pseudo-random generator, so a (seed, scenario) pair always replays the exact
same interleaving. Every lock grant/release, message, and choice lands in
the Trace, which is the single global event order the property checkers
quantify over.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Tuple

from .crypto import ContractViolation


class BudgetExceeded(RuntimeError):
    """The scenario ran past its step budget (a liveness failure)."""


@dataclass
class Event:
    kind: str
    step: int
    data: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "step": self.step, "data": self.data}


class Trace:
    """Append-only global event log."""

    def __init__(self) -> None:
        self.events: List[Event] = []
        self._step = 0
        # set by the scheduler so events carry the activity they ran under
        self.task_provider: Optional[Callable[[], str]] = None

    def set_step(self, step: int) -> None:
        self._step = step

    def record(self, event_kind: str, **data) -> Event:
        # the positional name dodges data fields that are themselves "kind"
        if "task" not in data and self.task_provider is not None:
            name = self.task_provider()
            if name:
                data["task"] = name
        event = Event(kind=event_kind, step=self._step, data=data)
        self.events.append(event)
        return event

    def by_kind(self, kind: str) -> List[Event]:
        return [e for e in self.events if e.kind == kind]

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)


@dataclass
class _Task:
    tid: int
    name: str
    gen: Iterator
    send_value: object = None
    waiting_on: Optional[object] = None  # lock key while blocked
    done: bool = False
    failure: Optional[BaseException] = None


class Scheduler:
    """Runs activities to completion under a seeded interleaving."""

    def __init__(self, seed: int, trace: Optional[Trace] = None,
                 step_budget: int = 10000,
                 rpc_handler: Optional[Callable] = None) -> None:
        self.rng = random.Random(seed)
        self.trace = trace if trace is not None else Trace()
        self.step_budget = step_budget
        self.rpc_handler = rpc_handler
        self._tasks: List[_Task] = []
        self._lock_holders: Dict[object, int] = {}
        self._lock_waiters: Dict[object, List[int]] = {}
        self._next_tid = 0
        self.current_tid: Optional[int] = None
        self.steps = 0  # cumulative across run() calls
        self.trace.task_provider = self.current_task_name

    # -- task management -----------------------------------------------------

    def spawn(self, name: str, gen: Iterator) -> int:
        task = _Task(tid=self._next_tid, name=name, gen=gen)
        self._next_tid += 1
        self._tasks.append(task)
        return task.tid

    def _runnable(self) -> List[_Task]:
        return [t for t in self._tasks
                if not t.done and t.waiting_on is None]

    def _blocked(self) -> List[_Task]:
        return [t for t in self._tasks
                if not t.done and t.waiting_on is not None]

    # -- locks ----------------------------------------------------------------

    def holds_lock(self, tid: int, key: object) -> bool:
        return self._lock_holders.get(key) == tid

    def outstanding_locks(self) -> Dict[object, int]:
        return dict(self._lock_holders)

    def _acquire(self, task: _Task, key: object) -> None:
        if self._lock_holders.get(key) == task.tid:
            raise ContractViolation(
                "%s re-acquired lock %r it already holds" % (task.name, key))
        if key not in self._lock_holders:
            self._lock_holders[key] = task.tid
            self.trace.record("LockOp", op="acquire", key=_key_text(key),
                              task=task.name)
        else:
            task.waiting_on = key
            self._lock_waiters.setdefault(key, []).append(task.tid)
            self.trace.record("LockOp", op="wait", key=_key_text(key),
                              task=task.name)

    def _release(self, task: _Task, key: object) -> None:
        if self._lock_holders.get(key) != task.tid:
            raise ContractViolation(
                "%s released lock %r it does not hold" % (task.name, key))
        del self._lock_holders[key]
        self.trace.record("LockOp", op="release", key=_key_text(key),
                          task=task.name)
        waiters = self._lock_waiters.get(key, [])
        if waiters:
            tid = waiters.pop(0)
            heir = self._task_by_id(tid)
            heir.waiting_on = None
            self._lock_holders[key] = heir.tid
            self.trace.record("LockOp", op="acquire", key=_key_text(key),
                              task=heir.name)

    def _task_by_id(self, tid: int) -> _Task:
        for t in self._tasks:
            if t.tid == tid:
                return t
        raise KeyError(tid)

    def current_task_name(self) -> str:
        if self.current_tid is None:
            return ""
        return self._task_by_id(self.current_tid).name

    # -- main loop -------------------------------------------------------------

    def run(self) -> Trace:
        """Drive all spawned activities to completion.

        Raises BudgetExceeded past the step budget and ContractViolation on a
        deadlock (blocked tasks with nothing runnable), double release, or
        re-entrant acquire. Exceptions inside activities propagate. The step
        budget is cumulative, so repeated run() calls (phased scenarios)
        share one allowance.
        """
        while True:
            runnable = self._runnable()
            if not runnable:
                if self._blocked():
                    raise ContractViolation(
                        "deadlock: %s all waiting on locks"
                        % [t.name for t in self._blocked()])
                break
            self.steps += 1
            if self.steps > self.step_budget:
                raise BudgetExceeded("scenario exceeded %d steps"
                                     % self.step_budget)
            self.trace.set_step(self.steps)
            task = self.rng.choice(runnable)
            self._advance(task)
        return self.trace

    def _advance(self, task: _Task) -> None:
        # current_tid stays set through effect handling so events recorded
        # by the rpc handler are attributed to the task that sent the query
        self.current_tid = task.tid
        try:
            try:
                effect = task.gen.send(task.send_value)
            except StopIteration:
                task.done = True
                return
            task.send_value = None
            kind = effect[0]
            if kind == "acquire":
                self._acquire(task, effect[1])
            elif kind == "release":
                self._release(task, effect[1])
            elif kind == "rpc":
                if self.rpc_handler is None:
                    raise ContractViolation("no rpc handler installed")
                task.send_value = self.rpc_handler(effect[1], effect[2])
            elif kind == "choose":
                label, options = effect[1], effect[2]
                picked = self.rng.choice(list(options))
                self.trace.record("Choice", label=label, picked=str(picked))
                task.send_value = picked
            elif kind == "pause":
                pass
            else:
                raise ContractViolation("unknown effect %r" % (effect,))
        finally:
            self.current_tid = None


def _key_text(key: object) -> str:
    if isinstance(key, tuple):
        return "/".join(str(part) for part in key)
    return str(key)
