"""The task distribution: parameterized program families, prompt/reference
splitting, hidden-test generation, split-disjoint datasets, and
functionally-equivalent response variants for comparator pretraining.

A task is a complete MiniLang program drawn from one of five families. A
uniform-random statement boundary splits it: descriptor tokens plus everything
before the boundary form the prompt (ending in a hole marker), the rest plus
EOP is the reference response. Hidden tests are produced by running the full
program on random inputs; they are read only by the evaluation module.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, replace

import numpy as np

from rlcf import vocab
from rlcf.lang import checker
from rlcf.lang.checker import (
    Assign, Binary, BoolLit, If, IntLit, Let, Print, Read, Unary, Var, While,
)
from rlcf.lang.interpreter import ExecStatus, execute

SPLITS = ("coarse", "finetune", "test")
_SPLIT_IDS = {name: i for i, name in enumerate(SPLITS)}
INPUT_LOW, INPUT_HIGH = 0, 40
MIN_TESTS, MAX_TESTS = 4, 8


@dataclass(frozen=True)
class TestCase:
    input: tuple[int, ...]
    output: tuple[int, ...]


@dataclass(frozen=True)
class TaskSample:
    family: str
    seed: int
    params: tuple[int, ...]
    prompt: tuple[int, ...]
    reference: tuple[int, ...]
    tests: tuple[TestCase, ...]
    split: str = ""


@dataclass(frozen=True)
class EquivalenceTriple:
    prompt: tuple[int, ...]
    anchor: tuple[int, ...]
    positive: tuple[int, ...]
    negative: tuple[int, ...]


# --- families ---


@dataclass(frozen=True)
class Family:
    name: str
    param_space: tuple[tuple[int, ...], ...]
    arity: "callable"
    build: "callable"  # (params, names) -> (descriptor lexeme str, [stmt lexeme str])
    n_names: int


def _sumk_build(params, names):
    k, c = params
    acc, tmp = names
    stmts = [f"let {acc} : int = {c} ;", f"let {tmp} : int = 0 ;"]
    for _ in range(k):
        stmts += [f"read {tmp} ;", f"{acc} = {acc} + {tmp} ;"]
    stmts.append(f"print {acc} ;")
    return f"<desc> sum n= {k} c= {c} </desc>", stmts


def _maxk_build(params, names):
    k, b = params
    best, tmp = names
    stmts = [f"let {best} : int = 0 ;", f"read {best} ;", f"let {tmp} : int = 0 ;"]
    for _ in range(k - 1):
        stmts += [f"read {tmp} ;", f"if {best} < {tmp} {{ {best} = {tmp} ; }}"]
    stmts.append(f"print {best} + {b} ;")
    return f"<desc> max n= {k} b= {b} </desc>", stmts


def _threshold_build(params, names):
    k, t, d = params
    acc, tmp = names
    lo, hi = (1, 0) if d == 0 else (0, 1)
    stmts = [f"let {acc} : int = 0 ;", f"let {tmp} : int = 0 ;"]
    for _ in range(k):
        stmts += [f"read {tmp} ;", f"{acc} = {acc} + {tmp} ;"]
    stmts.append(
        f"if {acc} <= {t} * {k} {{ print {lo} ; }} else {{ print {hi} ; }}"
    )
    return f"<desc> threshold n= {k} t= {t} d= {d} </desc>", stmts


def _countdown_build(params, names):
    m, step = params
    (var,) = names
    stmts = [
        f"let {var} : int = 0 ;",
        f"read {var} ;",
        f"{var} = {var} % {m} ;",
        f"while 0 < {var} {{ print {var} ; {var} = {var} - {step} ; }}",
    ]
    return f"<desc> count m= {m} s= {step} </desc>", stmts


def _linear_build(params, names):
    a, b, c = params
    u, v = names
    stmts = [
        f"let {u} : int = 0 ;",
        f"read {u} ;",
        f"let {v} : int = 0 ;",
        f"read {v} ;",
        f"print {a} * {u} + {b} * {v} + {c} ;",
    ]
    return f"<desc> linear a= {a} b= {b} c= {c} </desc>", stmts


FAMILIES: dict[str, Family] = {
    "sumk": Family(
        "sumk",
        tuple((k, c) for k in range(2, 6) for c in range(21)),
        lambda p: p[0], _sumk_build, 2,
    ),
    "maxk": Family(
        "maxk",
        tuple((k, b) for k in range(2, 6) for b in range(10)),
        lambda p: p[0], _maxk_build, 2,
    ),
    "threshold": Family(
        "threshold",
        tuple((k, t, d) for k in range(1, 4) for t in range(8, 21) for d in (0, 1)),
        lambda p: p[0], _threshold_build, 2,
    ),
    "countdown": Family(
        "countdown",
        tuple((m, s) for m in range(4, 16) for s in range(1, 4)),
        lambda p: 1, _countdown_build, 1,
    ),
    "linear": Family(
        "linear",
        tuple((a, b, c) for a in range(1, 13) for b in range(21) for c in range(1, 7)),
        lambda p: 2, _linear_build, 2,
    ),
}
FAMILY_NAMES = tuple(FAMILIES)
_FAMILY_IDS = {name: i for i, name in enumerate(FAMILY_NAMES)}


def _task_rng(family: str, seed: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((_FAMILY_IDS[family], seed & 0xFFFFFFFFFFFF)))
    )


def _distinct_inputs(rng: np.random.Generator, arity: int, count: int) -> list[tuple[int, ...]]:
    seen: set[tuple[int, ...]] = set()
    while len(seen) < count:
        seen.add(tuple(int(v) for v in rng.integers(INPUT_LOW, INPUT_HIGH + 1, size=arity)))
    return sorted(seen)


def sample_task_pair(
    family: str,
    seed: int,
    param_pool: tuple[tuple[int, ...], ...] | None = None,
) -> TaskSample:
    """Draw one (prompt, reference, tests) task, deterministic in (family, seed)."""
    fam = FAMILIES[family]
    pool = param_pool if param_pool is not None else fam.param_space
    for attempt in range(8):
        rng = _task_rng(family, seed + (attempt << 40))
        params = pool[int(rng.integers(0, len(pool)))]
        names = [vocab.IDENT_NAMES[i] for i in
                 rng.choice(len(vocab.IDENT_NAMES), size=fam.n_names, replace=False)]
        descriptor, stmts = fam.build(params, names)
        program = [tok for stmt in stmts for tok in vocab.encode(stmt)] + [vocab.EOP]
        if not checker.check_program(program).ok:
            continue  # defensive; templates always compile
        arity = fam.arity(params)
        n_tests = int(rng.integers(MIN_TESTS, MAX_TESTS + 1))
        tests = []
        for inp in _distinct_inputs(rng, arity, n_tests):
            result = execute(program, inp)
            if result.status is not ExecStatus.COMPLETED:
                break
            tests.append(TestCase(inp, result.outputs))
        if len(tests) != n_tests:
            continue
        boundary = int(rng.integers(0, len(stmts)))
        starter = [tok for stmt in stmts[:boundary] for tok in vocab.encode(stmt)]
        prompt = vocab.encode(descriptor) + starter + [vocab.HOLE]
        reference = [tok for stmt in stmts[boundary:] for tok in vocab.encode(stmt)] + [vocab.EOP]
        if not checker.compile_check(prompt, reference).ok:
            continue
        return TaskSample(
            family=family, seed=seed, params=tuple(int(p) for p in params),
            prompt=tuple(prompt), reference=tuple(reference), tests=tuple(tests),
        )
    raise RuntimeError(f"could not generate a valid task for {family!r} seed {seed}")


def run_tests(prompt, response, tests, fuel: int = 10_000) -> tuple[bool, bool]:
    """(executes, passes): all tests complete / all outputs match."""
    program = checker.prompt_code(list(prompt)) + list(response)
    executes = passes = True
    for test in tests:
        result = execute(program, list(test.input), fuel)
        if result.status is not ExecStatus.COMPLETED:
            return False, False
        if result.outputs != tuple(test.output):
            passes = False
    return executes, passes


# --- split-disjoint dataset generation ---


def split_param_pools(seed: int, fractions=(0.6, 0.2, 0.2)):
    """Partition each family's parameter tuples across the three splits."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed & 0xFFFFFFFFFFFF, 977))))
    pools: dict[str, dict[str, tuple]] = {}
    for name, fam in FAMILIES.items():
        order = rng.permutation(len(fam.param_space))
        tuples = [fam.param_space[i] for i in order]
        n = len(tuples)
        n_coarse = max(1, int(round(fractions[0] * n)))
        n_fine = max(1, int(round(fractions[1] * n)))
        n_coarse = min(n_coarse, n - 2)
        pools[name] = {
            "coarse": tuple(tuples[:n_coarse]),
            "finetune": tuple(tuples[n_coarse:n_coarse + n_fine]),
            "test": tuple(tuples[n_coarse + n_fine:]),
        }
    return pools


def _sample_seed(seed: int, split: str, index: int) -> int:
    ss = np.random.SeedSequence((seed & 0xFFFFFFFFFFFF, _SPLIT_IDS[split], index))
    return int(ss.generate_state(1, np.uint64)[0] & 0x7FFFFFFFFFFF)


def generate_dataset(seed: int, counts: dict[str, int]) -> list[TaskSample]:
    """Generate all splits; no parameter tuple appears in two splits."""
    pools = split_param_pools(seed)
    samples: list[TaskSample] = []
    for split in SPLITS:
        for i in range(counts.get(split, 0)):
            family = FAMILY_NAMES[i % len(FAMILY_NAMES)]
            task = sample_task_pair(
                family, _sample_seed(seed, split, i), param_pool=pools[family][split]
            )
            samples.append(replace(task, split=split))
    return samples


def write_dataset(path, samples: list[TaskSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            record = {
                "family": s.family,
                "seed": s.seed,
                "params": list(s.params),
                "prompt_tokens": list(s.prompt),
                "reference_tokens": list(s.reference),
                "tests": [{"input": list(t.input), "output": list(t.output)} for t in s.tests],
                "split": s.split,
            }
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def load_dataset(path, split: str | None = None, with_tests: bool = True) -> list[TaskSample]:
    """Load samples, optionally one split. Training-time callers must load
    with_tests=False; hidden tests are for the evaluation module only."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if split is not None and rec["split"] != split:
                continue
            tests = tuple(
                TestCase(tuple(t["input"]), tuple(t["output"])) for t in rec["tests"]
            ) if with_tests else ()
            samples.append(TaskSample(
                family=rec["family"], seed=rec["seed"], params=tuple(rec["params"]),
                prompt=tuple(rec["prompt_tokens"]), reference=tuple(rec["reference_tokens"]),
                tests=tests, split=rec["split"],
            ))
    return samples


# --- semantics-preserving response variants ---

_COMMUTATIVE = tuple(vocab.id_of(op) for op in ("+", "*", "==", "!=", "&&", "||"))
_LP, _RP = vocab.id_of("("), vocab.id_of(")")


@dataclass
class _Paren:
    inner: object
    pos: int = 0


def _expr_tokens(expr) -> list[int]:
    if isinstance(expr, IntLit):
        return [vocab.int_token(expr.value)]
    if isinstance(expr, BoolLit):
        return [vocab.id_of("true" if expr.value else "false")]
    if isinstance(expr, Var):
        return [expr.name]
    if isinstance(expr, Unary):
        return [expr.op] + _wrap(expr.operand)
    if isinstance(expr, Binary):
        return _wrap(expr.left) + [expr.op] + _wrap(expr.right)
    if isinstance(expr, _Paren):
        return [_LP] + _expr_tokens(expr.inner) + [_RP]
    raise TypeError(f"unknown expression {expr!r}")


def _wrap(expr) -> list[int]:
    tokens = _expr_tokens(expr)
    return tokens if len(tokens) == 1 else [_LP] + tokens + [_RP]


_SEMI = vocab.id_of(";")
_LB, _RB = vocab.id_of("{"), vocab.id_of("}")


def _stmt_tokens(stmt) -> list[int]:
    if isinstance(stmt, Let):
        type_tok = vocab.id_of(stmt.declared_type)
        return ([vocab.id_of("let"), stmt.name, vocab.id_of(":"), type_tok,
                 vocab.id_of("=")] + _expr_tokens(stmt.value) + [_SEMI])
    if isinstance(stmt, Assign):
        return [stmt.name, vocab.id_of("=")] + _expr_tokens(stmt.value) + [_SEMI]
    if isinstance(stmt, If):
        out = [vocab.id_of("if")] + _expr_tokens(stmt.cond) + [_LB]
        out += [t for s in stmt.then_body for t in _stmt_tokens(s)] + [_RB]
        if stmt.else_body is not None:
            out += [vocab.id_of("else"), _LB]
            out += [t for s in stmt.else_body for t in _stmt_tokens(s)] + [_RB]
        return out
    if isinstance(stmt, While):
        out = [vocab.id_of("while")] + _expr_tokens(stmt.cond) + [_LB]
        out += [t for s in stmt.body for t in _stmt_tokens(s)] + [_RB]
        return out
    if isinstance(stmt, Print):
        return [vocab.id_of("print")] + _expr_tokens(stmt.value) + [_SEMI]
    if isinstance(stmt, Read):
        return [vocab.id_of("read"), stmt.name, _SEMI]
    raise TypeError(f"unknown statement {stmt!r}")


def _walk_stmts(stmts):
    for stmt in stmts:
        yield stmt
        if isinstance(stmt, If):
            yield from _walk_stmts(stmt.then_body)
            if stmt.else_body is not None:
                yield from _walk_stmts(stmt.else_body)
        elif isinstance(stmt, While):
            yield from _walk_stmts(stmt.body)


def _walk_exprs(stmts):
    def exprs_of(e):
        yield e
        if isinstance(e, Unary):
            yield from exprs_of(e.operand)
        elif isinstance(e, Binary):
            yield from exprs_of(e.left)
            yield from exprs_of(e.right)

    for stmt in _walk_stmts(stmts):
        for attr in ("value", "cond"):
            e = getattr(stmt, attr, None)
            if e is not None:
                yield from exprs_of(e)


def _stmt_slots(stmts):
    """All (body_list, index) positions, recursively."""
    for i, stmt in enumerate(stmts):
        yield stmts, i
        if isinstance(stmt, If):
            yield from _stmt_slots(stmt.then_body)
            if stmt.else_body is not None:
                yield from _stmt_slots(stmt.else_body)
        elif isinstance(stmt, While):
            yield from _stmt_slots(stmt.body)


def _names_in(stmts) -> set[int]:
    names = set()
    for stmt in _walk_stmts(stmts):
        for attr in ("name",):
            n = getattr(stmt, attr, None)
            if n is not None:
                names.add(n)
    for e in _walk_exprs(stmts):
        if isinstance(e, Var):
            names.add(e.name)
    return names


def _apply_rename(response, starter, rng) -> bool:
    declared = [s for s in _walk_stmts(response) if isinstance(s, Let)]
    starter_names = {s.name for s in _walk_stmts(starter) if isinstance(s, Let)}
    candidates = sorted({s.name for s in declared} - starter_names)
    fresh = sorted(set(vocab.IDENT_IDS) - _names_in(starter) - _names_in(response))
    if not candidates or not fresh:
        return False
    count = min(len(candidates), len(fresh))
    picked = [candidates[i] for i in rng.choice(len(candidates), size=count, replace=False)]
    targets = [fresh[i] for i in rng.choice(len(fresh), size=count, replace=False)]
    mapping = dict(zip(picked, targets))
    for stmt in _walk_stmts(response):
        if isinstance(stmt, (Let, Assign, Read)) and stmt.name in mapping:
            stmt.name = mapping[stmt.name]
    for e in _walk_exprs(response):
        if isinstance(e, Var) and e.name in mapping:
            e.name = mapping[e.name]
    return True


def _apply_swap(response, starter, rng) -> bool:
    nodes = [e for e in _walk_exprs(response)
             if isinstance(e, Binary) and e.op in _COMMUTATIVE]
    if not nodes:
        return False
    node = nodes[int(rng.integers(0, len(nodes)))]
    node.left, node.right = node.right, node.left
    return True


def _apply_ifflip(response, starter, rng) -> bool:
    nodes = [s for s in _walk_stmts(response)
             if isinstance(s, If) and s.else_body is not None]
    if not nodes:
        return False
    node = nodes[int(rng.integers(0, len(nodes)))]
    node.cond = Unary(vocab.id_of("!"), _Paren(node.cond), 0)
    node.then_body, node.else_body = node.else_body, node.then_body
    return True


def _apply_declsplit(response, starter, rng) -> bool:
    slots = [(body, i) for body, i in _stmt_slots(response) if isinstance(body[i], Let)]
    if not slots:
        return False
    body, i = slots[int(rng.integers(0, len(slots)))]
    let = body[i]
    default = IntLit(0, 0) if let.declared_type == checker.INT else BoolLit(False, 0)
    body[i:i + 1] = [
        Let(let.name, let.declared_type, default, let.name_pos),
        Assign(let.name, let.value, let.name_pos),
    ]
    return True


def _apply_paren(response, starter, rng) -> bool:
    stmts = [s for s in _walk_stmts(response) if hasattr(s, "value") or hasattr(s, "cond")]
    if not stmts:
        return False
    stmt = stmts[int(rng.integers(0, len(stmts)))]
    attr = "value" if hasattr(stmt, "value") else "cond"
    setattr(stmt, attr, _Paren(getattr(stmt, attr)))
    return True


_TRANSFORMS = (_apply_rename, _apply_swap, _apply_ifflip, _apply_declsplit, _apply_paren)


def _split_ast(sample: TaskSample):
    starter_code = checker.prompt_code(list(sample.prompt))
    program = starter_code + list(sample.reference)
    ast, diag = checker.parse_program(program)
    if ast is None:
        raise ValueError(f"reference does not parse: {diag.message}")
    boundary = len(starter_code)
    split_at = sum(1 for s in ast.body if s.span[0] < boundary)
    return ast, split_at, starter_code


def equivalent_variants(sample: TaskSample, seed: int, max_variants: int = 4) -> list[tuple[int, ...]]:
    """Functionally equivalent responses for sample.prompt, identity included.

    Each variant compiles against the prompt and passes all of the sample's
    tests; transforms that would break either are skipped.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed & 0xFFFFFFFFFFFF, 40427))))
    _, split_at, _ = _split_ast(sample)
    variants: list[tuple[int, ...]] = [tuple(sample.reference)]

    def try_variant(transform_ids) -> None:
        ast_copy, _, _ = _split_ast(sample)
        ast_copy = copy.deepcopy(ast_copy)
        starter_stmts = ast_copy.body[:split_at]
        response_stmts = ast_copy.body[split_at:]
        applied = False
        for t in transform_ids:
            applied = _TRANSFORMS[t](response_stmts, starter_stmts, rng) or applied
        if not applied:
            return
        tokens = [tok for s in response_stmts for tok in _stmt_tokens(s)] + [vocab.EOP]
        candidate = tuple(tokens)
        if candidate in variants:
            return
        if not checker.compile_check(list(sample.prompt), tokens).ok:
            return
        executes, passes = run_tests(sample.prompt, tokens, sample.tests)
        if executes and passes:
            variants.append(candidate)

    for t in rng.permutation(len(_TRANSFORMS)):
        if len(variants) >= max_variants:
            break
        try_variant([int(t)])
    attempts = 0
    while len(variants) < max_variants and attempts < 6:
        pair = rng.choice(len(_TRANSFORMS), size=2, replace=False)
        try_variant([int(t) for t in pair])
        attempts += 1
    if len(variants) < 2:
        try_variant([_TRANSFORMS.index(_apply_paren)])
    return variants


def build_triples(
    samples: list[TaskSample], seed: int, per_sample: int = 2
) -> list[EquivalenceTriple]:
    """Anchor/positive from equivalent variants, negative mined from another
    task (a different family when possible)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed & 0xFFFFFFFFFFFF, 6011))))
    triples = []
    for idx, sample in enumerate(samples):
        variants = equivalent_variants(sample, _sample_seed(seed, "coarse", idx))
        positives = [v for v in variants[1:]] or [variants[0]]
        other_family = [s for s in samples if s.family != sample.family]
        other_params = [s for s in samples
                        if s.family == sample.family and s.params != sample.params]
        negatives_pool = other_family or other_params
        if not negatives_pool:
            continue
        for j in range(per_sample):
            positive = positives[j % len(positives)]
            negative = negatives_pool[int(rng.integers(0, len(negatives_pool)))]
            triples.append(EquivalenceTriple(
                prompt=sample.prompt, anchor=sample.reference,
                positive=positive, negative=negative.reference,
            ))
    return triples
