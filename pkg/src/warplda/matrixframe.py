"""Token-topic matrix with row and column visitation and work partitioning.

Entries live once, grouped by column (word) and ordered by (row, insertion)
within each column; a row index of store positions provides the transposed
traversal without a second copy. Rows of one index group keep ascending
(column, insertion) order, so both sweeps see the tokens of any given cell
in insertion order. Structure is frozen after finalize_layout; only the
per-entry payload (assignment and proposal slots) is mutable.
"""

import heapq
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TokenEntry",
    "MatrixBuilder",
    "TokenTopicMatrix",
    "ColumnView",
    "RowView",
    "VisitError",
    "PartitionPlan",
    "greedy_partition",
    "static_partition",
    "dynamic_partition",
    "imbalance_index",
    "dump_matrix",
    "load_matrix",
]

_MAGIC = b"WTTM0001"


@dataclass
class TokenEntry:
    """Mutable payload of one token: its assignment and proposal slots."""

    assignment: int = 0
    proposals: tuple = ()


class VisitError(RuntimeError):
    """Raised when a visitor callback fails; carries the axis and index."""

    def __init__(self, axis, index):
        super().__init__(f"visitor failed at {axis} {index}")
        self.axis = axis
        self.index = index


class MatrixBuilder:
    """Accumulates entries, then lays them out once via finalize_layout."""

    def __init__(self, rows, cols, proposal_slots):
        if rows < 0 or cols < 0 or proposal_slots < 1:
            raise ValueError("invalid matrix dimensions")
        self.rows = rows
        self.cols = cols
        self.proposal_slots = proposal_slots
        self._row_ids = []
        self._col_ids = []
        self._payload = {}
        self._finalized = False

    def add_entry(self, row, col, data=None):
        """Append one entry; insertion order is the entry's permanent id."""
        if self._finalized:
            raise RuntimeError("builder already finalized")
        if not 0 <= row < self.rows:
            raise IndexError(f"row {row} outside [0, {self.rows})")
        if not 0 <= col < self.cols:
            raise IndexError(f"col {col} outside [0, {self.cols})")
        if data is not None:
            self._payload[len(self._row_ids)] = data
        self._row_ids.append(row)
        self._col_ids.append(col)

    def add_entries(self, rows, cols):
        """Bulk append; equivalent to add_entry per element in order."""
        if self._finalized:
            raise RuntimeError("builder already finalized")
        rows = np.asarray(rows, np.int64)
        cols = np.asarray(cols, np.int64)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise ValueError("rows and cols must be flat and equally long")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.rows:
                raise IndexError("row id out of range")
            if cols.min() < 0 or cols.max() >= self.cols:
                raise IndexError("col id out of range")
        self._row_ids.extend(rows.tolist())
        self._col_ids.extend(cols.tolist())

    def finalize_layout(self):
        """Sort entries into the column store and build the row index."""
        if self._finalized:
            raise RuntimeError("builder already finalized")
        self._finalized = True
        total = len(self._row_ids)
        rows = np.asarray(self._row_ids, np.int32)
        cols = np.asarray(self._col_ids, np.int32)
        entry_ids = np.arange(total, dtype=np.int64)
        assignments = np.zeros(total, np.int32)
        proposals = np.zeros((total, self.proposal_slots), np.int32)
        for eid, data in self._payload.items():
            assignments[eid] = data.assignment
            for i, p in enumerate(data.proposals[:self.proposal_slots]):
                proposals[eid, i] = p
        return TokenTopicMatrix._from_entries(
            self.rows, self.cols, self.proposal_slots, rows, cols,
            entry_ids, assignments, proposals)


class TokenTopicMatrix:
    """Finalized matrix; structure immutable, payload arrays mutable.

    Attributes
    ----------
    col_ptr : int64[cols + 1]
        Column boundaries into the store.
    col_row, col_of : int32[total]
        Row id and column id of the entry at each store position.
    col_entry : int64[total]
        Insertion id of the entry at each store position.
    col_assign : int32[total]
        Current topic assignment per store position.
    col_props : int32[total, proposal_slots]
        Stored proposals per store position.
    row_ptr : int64[rows + 1], row_ref : int64[total]
        Row index: store positions of each row's entries in ascending
        (column, insertion) order.
    """

    def __init__(self):
        raise TypeError("use MatrixBuilder or load_matrix")

    @classmethod
    def _from_entries(cls, rows, cols, proposal_slots, row_ids, col_ids,
                      entry_ids, assignments, proposals):
        m = cls.__new__(cls)
        total = row_ids.size
        m.rows = rows
        m.cols = cols
        m.proposal_slots = proposal_slots
        m.entry_total = int(total)
        order = np.lexsort((entry_ids, row_ids, col_ids))
        m.col_ptr = np.zeros(cols + 1, np.int64)
        np.cumsum(np.bincount(col_ids, minlength=cols), out=m.col_ptr[1:])
        m.col_row = np.ascontiguousarray(row_ids[order])
        m.col_entry = np.ascontiguousarray(entry_ids[order])
        m.col_assign = np.ascontiguousarray(assignments[order])
        m.col_props = np.ascontiguousarray(proposals[order])
        m.col_of = np.repeat(np.arange(cols, dtype=np.int32),
                             np.diff(m.col_ptr))
        m._pos_of_entry = np.empty(total, np.int64)
        m._pos_of_entry[m.col_entry] = np.arange(total, dtype=np.int64)
        m.row_ref = np.lexsort((m.col_entry, m.col_of, m.col_row))
        m.row_ptr = np.zeros(rows + 1, np.int64)
        np.cumsum(np.bincount(m.col_row, minlength=rows), out=m.row_ptr[1:])
        return m

    # -- per-entry access ---------------------------------------------------

    def entry(self, entry_id):
        pos = self._pos_of_entry[entry_id]
        return TokenEntry(int(self.col_assign[pos]),
                          tuple(int(p) for p in self.col_props[pos]))

    def entry_location(self, entry_id):
        pos = self._pos_of_entry[entry_id]
        return int(self.col_row[pos]), int(self.col_of[pos])

    def assignments_by_entry(self):
        """Assignments indexed by insertion id (a copy)."""
        out = np.empty(self.entry_total, np.int32)
        out[self.col_entry] = self.col_assign
        return out

    def proposals_by_entry(self):
        out = np.empty((self.entry_total, self.proposal_slots), np.int32)
        out[self.col_entry] = self.col_props
        return out

    def column_size(self, col):
        return int(self.col_ptr[col + 1] - self.col_ptr[col])

    def row_size(self, row):
        return int(self.row_ptr[row + 1] - self.row_ptr[row])

    # -- visitation ---------------------------------------------------------

    def visit_by_column(self, fn, *, plan=None, pool=None, make_accumulator=None):
        """Call fn(view, acc) for every column, empty ones included.

        With a plan and a pool, column groups run on pool workers, each with
        its own accumulator from make_accumulator(); the per-group results
        are reduced by "+" in group order and returned. Serial otherwise.
        A callback error aborts the sweep and is re-raised as VisitError
        carrying the column id.
        """
        return self._visit("column", fn, plan, pool, make_accumulator)

    def visit_by_row(self, fn, *, plan=None, pool=None, make_accumulator=None):
        """Row-order twin of visit_by_column."""
        return self._visit("row", fn, plan, pool, make_accumulator)

    def _make_view(self, axis, index):
        if axis == "column":
            return ColumnView(self, index, int(self.col_ptr[index]),
                              int(self.col_ptr[index + 1]))
        return RowView(self, index, int(self.row_ptr[index]),
                       int(self.row_ptr[index + 1]))

    def _visit(self, axis, fn, plan, pool, make_accumulator):
        count = self.cols if axis == "column" else self.rows
        if plan is None or pool is None:
            acc = make_accumulator() if make_accumulator is not None else None
            for index in range(count):
                view = self._make_view(axis, index)
                try:
                    fn(view, acc)
                except Exception as exc:
                    raise VisitError(axis, index) from exc
            return acc

        if plan.item_count != count:
            raise ValueError(
                f"plan covers {plan.item_count} items, axis has {count}")

        def run_group(group):
            acc = make_accumulator() if make_accumulator is not None else None
            for index in group:
                view = self._make_view(axis, int(index))
                try:
                    fn(view, acc)
                except Exception as exc:
                    raise VisitError(axis, int(index)) from exc
            return acc

        futures = [pool.submit(run_group, g) for g in plan.groups]
        results = [f.result() for f in futures]
        if make_accumulator is None:
            return None
        total = results[0]
        for part in results[1:]:
            total = total + part
        return total


class ColumnView:
    """Live window onto one column; arrays are slices of the store."""

    __slots__ = ("matrix", "index", "start", "stop")

    def __init__(self, matrix, index, start, stop):
        self.matrix = matrix
        self.index = index
        self.start = start
        self.stop = stop

    @property
    def size(self):
        return self.stop - self.start

    @property
    def row_ids(self):
        return self.matrix.col_row[self.start:self.stop]

    @property
    def entry_ids(self):
        return self.matrix.col_entry[self.start:self.stop]

    @property
    def assignments(self):
        return self.matrix.col_assign[self.start:self.stop]

    @assignments.setter
    def assignments(self, values):
        self.matrix.col_assign[self.start:self.stop] = values

    @property
    def proposals(self):
        return self.matrix.col_props[self.start:self.stop]

    @proposals.setter
    def proposals(self, values):
        self.matrix.col_props[self.start:self.stop] = values


class RowView:
    """Window onto one row through the reference index.

    Reads gather copies; writes go through the setters (or use refs with
    the store arrays directly for in-place kernel work).
    """

    __slots__ = ("matrix", "index", "start", "stop")

    def __init__(self, matrix, index, start, stop):
        self.matrix = matrix
        self.index = index
        self.start = start
        self.stop = stop

    @property
    def size(self):
        return self.stop - self.start

    @property
    def refs(self):
        return self.matrix.row_ref[self.start:self.stop]

    @property
    def col_ids(self):
        return self.matrix.col_of[self.refs]

    @property
    def entry_ids(self):
        return self.matrix.col_entry[self.refs]

    @property
    def assignments(self):
        return self.matrix.col_assign[self.refs]

    @assignments.setter
    def assignments(self, values):
        self.matrix.col_assign[self.refs] = values

    @property
    def proposals(self):
        return self.matrix.col_props[self.refs]

    @proposals.setter
    def proposals(self, values):
        self.matrix.col_props[self.refs] = values


# ---------------------------------------------------------------------------
# work partitioning


@dataclass(frozen=True)
class PartitionPlan:
    """Assignment of items (rows or columns) to worker groups."""

    groups: tuple
    loads: np.ndarray
    item_count: int = field(default=0)

    @property
    def workers(self):
        return len(self.groups)

    @property
    def imbalance(self):
        return imbalance_index(self.loads)


def _plan_from_assignment(assign, weights, workers):
    n = len(weights)
    groups = []
    loads = np.zeros(workers, np.int64)
    order = np.argsort(assign, kind="stable")
    boundaries = np.searchsorted(assign[order], np.arange(workers + 1))
    for b in range(workers):
        g = np.sort(order[boundaries[b]:boundaries[b + 1]]).astype(np.int64)
        groups.append(g)
        loads[b] = int(weights[g].sum()) if g.size else 0
    return PartitionPlan(groups=tuple(groups), loads=loads, item_count=n)


def greedy_partition(weights, workers):
    """Heaviest-first list scheduling.

    Items are placed in decreasing weight order (ties: lower id first) onto
    the worker with the smallest current load (ties: lower worker id).
    Deterministic for equal inputs; each group keeps ascending item ids.
    """
    w = np.asarray(weights, np.int64)
    if workers < 1:
        raise ValueError("workers must be positive")
    if w.size and w.min() < 0:
        raise ValueError("weights must be nonnegative")
    order = np.lexsort((np.arange(w.size), -w))
    heap = [(0, b) for b in range(workers)]
    heapq.heapify(heap)
    assign = np.empty(w.size, np.int64)
    for i in order:
        load, b = heapq.heappop(heap)
        assign[i] = b
        heapq.heappush(heap, (load + int(w[i]), b))
    return _plan_from_assignment(assign, w, workers)


def static_partition(weights, workers, rng):
    """Shuffle items, then split into equal-count contiguous groups."""
    w = np.asarray(weights, np.int64)
    perm = rng.permutation(w.size)
    assign = np.empty(w.size, np.int64)
    for b, chunk in enumerate(np.array_split(perm, workers)):
        assign[chunk] = b
    return _plan_from_assignment(assign, w, workers)


def dynamic_partition(weights, workers, rng):
    """Shuffle items, then cut contiguous slices at multiples of the mean.

    Models first-come work stealing of a shuffled queue: each worker keeps
    taking items until the running total crosses its share of the total
    weight, so a heavy item overshoots its slice by a random partial load.
    """
    w = np.asarray(weights, np.int64)
    if w.size == 0:
        return _plan_from_assignment(np.empty(0, np.int64), w, workers)
    perm = rng.permutation(w.size)
    running = np.cumsum(w[perm])
    total = int(running[-1])
    targets = total * np.arange(1, workers, dtype=np.float64) / workers
    cuts = np.searchsorted(running, targets, side="left")
    assign = np.empty(w.size, np.int64)
    prev = 0
    for b, cut in enumerate(cuts.tolist()):
        # the item that crosses the target stays with worker b
        end = min(cut + 1, w.size)
        assign[perm[prev:end]] = b
        prev = max(prev, end)
    assign[perm[prev:]] = workers - 1
    return _plan_from_assignment(assign, w, workers)


def imbalance_index(loads):
    """max/mean - 1 over worker loads; 0 for an empty or zero plan."""
    loads = np.asarray(loads, np.float64)
    if loads.size == 0:
        return 0.0
    mean = loads.mean()
    if mean == 0:
        return 0.0
    return float(loads.max() / mean - 1.0)


# ---------------------------------------------------------------------------
# serialization


def dump_matrix(matrix, fileobj):
    """Write the matrix deterministically (little-endian, versioned magic)."""
    fileobj.write(_MAGIC)
    fileobj.write(struct.pack("<4q", matrix.rows, matrix.cols,
                              matrix.entry_total, matrix.proposal_slots))
    fileobj.write(matrix.col_ptr.astype("<i8").tobytes())
    fileobj.write(matrix.col_row.astype("<i4").tobytes())
    fileobj.write(matrix.col_entry.astype("<i8").tobytes())
    fileobj.write(matrix.col_assign.astype("<i4").tobytes())
    fileobj.write(np.ascontiguousarray(matrix.col_props).astype("<i4").tobytes())


def _read_exact(fileobj, n):
    data = fileobj.read(n)
    if len(data) != n:
        raise ValueError("truncated matrix dump")
    return data


def load_matrix(fileobj):
    """Read a dump_matrix stream back into a TokenTopicMatrix."""
    magic = _read_exact(fileobj, len(_MAGIC))
    if magic != _MAGIC:
        raise ValueError(f"bad matrix magic {magic!r}")
    rows, cols, total, slots = struct.unpack("<4q", _read_exact(fileobj, 32))
    col_ptr = np.frombuffer(_read_exact(fileobj, 8 * (cols + 1)), "<i8")
    col_row = np.frombuffer(_read_exact(fileobj, 4 * total), "<i4")
    col_entry = np.frombuffer(_read_exact(fileobj, 8 * total), "<i8")
    col_assign = np.frombuffer(_read_exact(fileobj, 4 * total), "<i4")
    col_props = np.frombuffer(_read_exact(fileobj, 4 * total * slots), "<i4")
    if int(col_ptr[-1]) != total:
        raise ValueError("inconsistent matrix dump")
    m = TokenTopicMatrix.__new__(TokenTopicMatrix)
    m.rows = rows
    m.cols = cols
    m.proposal_slots = slots
    m.entry_total = total
    m.col_ptr = col_ptr.astype(np.int64)
    m.col_row = col_row.astype(np.int32)
    m.col_entry = col_entry.astype(np.int64)
    m.col_assign = col_assign.astype(np.int32)
    m.col_props = col_props.astype(np.int32).reshape(total, slots)
    m.col_of = np.repeat(np.arange(cols, dtype=np.int32), np.diff(m.col_ptr))
    m._pos_of_entry = np.empty(total, np.int64)
    m._pos_of_entry[m.col_entry] = np.arange(total, dtype=np.int64)
    m.row_ref = np.lexsort((m.col_entry, m.col_of, m.col_row))
    m.row_ptr = np.zeros(rows + 1, np.int64)
    np.cumsum(np.bincount(m.col_row, minlength=rows), out=m.row_ptr[1:])
    return m
