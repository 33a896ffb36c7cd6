"""bAbI-format I/O, synthetic task generators with oracles, abstract forms.

The two generated tasks mirror the shapes of bAbI Path Finding (task 19) and
Positional Reasoning (task 17): locations or colored shapes are placed on an
integer grid, adjacency/relation facts describe the placement, and questions
are answered by an exhaustive oracle over the reconstructed grid.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .answerer import AnswerSpace
from .encoder import Vocabulary


class BabiFormatError(ValueError):
    """Raised on malformed bAbI-format input."""


# ---------------------------------------------------------------------------
# tokenization and rendering

_TOKEN_RE = re.compile(r"[a-z0-9]+|[.?,!]")

VARIABLE_SYMBOLS = ("x", "y", "z", "u", "v", "w", "s", "t")

_DIRECTION_ALIASES = {"n": "north", "s": "south", "e": "east", "w": "west"}


def tokenize(text):
    """Lowercase tokens with punctuation split into separate tokens."""
    return _TOKEN_RE.findall(text.lower())


def render(tokens, capitalize=True):
    """Canonical sentence text: space-joined, no space before punctuation."""
    out = ""
    for tok in tokens:
        if tok in ".?,!" or not out:
            out += tok
        else:
            out += " " + tok
    if capitalize and out:
        out = out[0].upper() + out[1:]
    return out


def render_abstract(tokens):
    """Render an abstract-form sentence; '?' keeps a leading space and
    single-letter variables are never capitalized."""
    out = " ".join(tokens)
    if out and len(tokens[0]) > 1:
        out = out[0].upper() + out[1:]
    return out


def normalize_answer(answer):
    """Lowercase; expand single-letter direction answers to full words."""
    parts = [p.strip() for p in answer.strip().lower().split(",")]
    return ",".join(_DIRECTION_ALIASES.get(p, p) for p in parts)


# ---------------------------------------------------------------------------
# instances and the bAbI file format


@dataclass
class Instance:
    """One QA episode: fact token sequences, question, answer class."""

    facts: list
    question: list
    answer: str
    supporting: list | None = None
    abstract_facts: list | None = None
    abstract_question: list | None = None

    @property
    def num_facts(self):
        return len(self.facts)


def parse_babi(source):
    """Parse bAbI-format text (a string or iterable of lines) into instances.

    Each question line yields one instance whose facts are all prior
    statement lines of the story. Supporting ids are re-mapped from story
    line numbers to 1-based fact indices.
    """
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]

    instances = []
    facts = []
    line_to_fact = {}
    prev_id = 0
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        m = re.match(r"^(\d+) (.*)$", raw)
        if m is None:
            raise BabiFormatError(f"line {lineno}: malformed line {raw!r}")
        line_id, rest = int(m.group(1)), m.group(2)
        if line_id == 1:
            facts = []
            line_to_fact = {}
        elif line_id != prev_id + 1:
            raise BabiFormatError(
                f"line {lineno}: non-monotonic id {line_id} after {prev_id}")
        prev_id = line_id

        if "\t" in rest:
            parts = rest.split("\t")
            if len(parts) != 3:
                raise BabiFormatError(
                    f"line {lineno}: question line needs question<TAB>answer<TAB>support")
            question, answer, support = parts
            supporting = None
            if support.strip():
                supporting = []
                for s in support.split():
                    sid = int(s)
                    if sid not in line_to_fact:
                        raise BabiFormatError(
                            f"line {lineno}: supporting id {sid} is not a statement line")
                    supporting.append(line_to_fact[sid] + 1)
            instances.append(Instance(
                facts=[list(f) for f in facts],
                question=tokenize(question),
                answer=normalize_answer(answer),
                supporting=supporting,
            ))
        else:
            line_to_fact[line_id] = len(facts)
            facts.append(tokenize(rest))
    return instances


def serialize(instances):
    """Canonical bAbI text for instances, one story per instance."""
    lines = []
    for inst in instances:
        for i, fact in enumerate(inst.facts, start=1):
            lines.append(f"{i} {render(fact)}")
        support = " ".join(str(s) for s in inst.supporting or [])
        lines.append(
            f"{len(inst.facts) + 1} {render(inst.question)}\t{inst.answer}\t{support}")
    return "\n".join(lines) + "\n" if lines else ""


# ---------------------------------------------------------------------------
# task specification and generators

LOCATIONS = ("office", "hallway", "kitchen", "garden", "bedroom", "bathroom")
SHAPES = ("triangle", "rectangle", "square", "circle", "star")
COLORS = ("pink", "blue", "red", "yellow", "green")

# "X is <dir> of Y" places X at Y + delta; east is +x, north is +y.
DIRECTIONS = {"north": (0, 1), "south": (0, -1), "east": (1, 0), "west": (-1, 0)}
OPPOSITE = {"north": "south", "south": "north", "east": "west", "west": "east"}

# "X is <rel> Y" places X at Y + delta; above is +y, right is +x.
RELATIONS = {"above": (0, 1), "below": (0, -1), "left": (-1, 0), "right": (1, 0)}

TASKS = ("path_finding", "positional")


@dataclass
class TaskSpec:
    """Generator parameters for one synthetic task."""

    task: str
    n_entities: int | None = None
    n_distractors: int = 0
    seed: int = 0
    locations: tuple = LOCATIONS
    shapes: tuple = SHAPES
    colors: tuple = COLORS

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.n_entities is None:
            self.n_entities = 6 if self.task == "path_finding" else 3
        if self.n_entities < 2:
            raise ValueError("need at least two entities")


def _sample(rng, items, k):
    idx = rng.permutation(len(items))[:k]
    return [items[i] for i in idx]


def _place_on_grid(rng, names, deltas):
    """Attach each entity adjacent to an already placed one; no collisions.

    Returns (coords, placement facts as (child, relation, anchor)).
    """
    coords = {names[0]: (0, 0)}
    occupied = {(0, 0)}
    placed = [names[0]]
    rels = sorted(deltas)
    facts = []
    for name in names[1:]:
        options = []
        for anchor in placed:
            ax, ay = coords[anchor]
            for rel in rels:
                dx, dy = deltas[rel]
                if (ax + dx, ay + dy) not in occupied:
                    options.append((anchor, rel, (ax + dx, ay + dy)))
        if not options:
            return None
        anchor, rel, cell = options[rng.integers(len(options))]
        coords[name] = cell
        occupied.add(cell)
        placed.append(name)
        facts.append((name, rel, anchor))
    return coords, facts


def _shortest_paths(edges, start, goal):
    """All shortest paths between two nodes over an edge set (BFS layers)."""
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    paths = [[start]]
    seen = {start}
    while paths:
        done = [p for p in paths if p[-1] == goal]
        if done:
            return done
        frontier = {p[-1] for p in paths}
        paths = [p + [n] for p in paths for n in adj.get(p[-1], [])
                 if n not in seen]
        seen |= frontier | {p[-1] for p in paths}
    return []


def generate_path_finding(spec, rng):
    """One Path Finding instance: adjacency facts, a 2-hop route question."""
    while True:
        names = _sample(rng, spec.locations, spec.n_entities)
        placement = _place_on_grid(rng, names, DIRECTIONS)
        if placement is None:
            continue
        coords, raw_facts = placement
        order = rng.permutation(len(raw_facts))
        raw_facts = [raw_facts[i] for i in order]
        edges = [(child, anchor) for child, _, anchor in raw_facts]
        step_dir = {}
        for child, rel, anchor in raw_facts:
            step_dir[(anchor, child)] = rel
            step_dir[(child, anchor)] = OPPOSITE[rel]

        candidates = []
        for a in names:
            for b in names:
                if a == b:
                    continue
                paths = _shortest_paths(edges, a, b)
                if len(paths) == 1 and len(paths[0]) == 3:
                    candidates.append((a, b, paths[0]))
        if not candidates:
            continue
        a, b, path = candidates[rng.integers(len(candidates))]
        answer = ",".join(step_dir[(path[i], path[i + 1])] for i in range(2))
        supporting = sorted(
            i + 1 for i, (child, _, anchor) in enumerate(raw_facts)
            if {child, anchor} in ({path[0], path[1]}, {path[1], path[2]}))
        return Instance(
            facts=[tokenize(f"The {c} is {rel} of the {anc}.")
                   for c, rel, anc in raw_facts],
            question=tokenize(f"How do you go from the {a} to the {b}?"),
            answer=answer,
            supporting=supporting,
        )


def oracle_path_finding(instance):
    """BFS answer recomputed from the instance's fact sentences alone."""
    edges = []
    step_dir = {}
    for fact in instance.facts:
        m = re.match(r"^the (\w+) is (north|south|east|west) of the (\w+) \.$",
                     " ".join(fact))
        if m is None:
            raise ValueError(f"unrecognized path fact: {fact}")
        child, rel, anchor = m.groups()
        edges.append((child, anchor))
        step_dir[(anchor, child)] = rel
        step_dir[(child, anchor)] = OPPOSITE[rel]
    q = re.match(r"^how do you go from the (\w+) to the (\w+) \?$",
                 " ".join(instance.question))
    if q is None:
        raise ValueError(f"unrecognized path question: {instance.question}")
    start, goal = q.groups()
    paths = _shortest_paths(edges, start, goal)
    if len(paths) != 1:
        raise ValueError(f"shortest path not unique: {len(paths)} found")
    path = paths[0]
    return ",".join(step_dir[(path[i], path[i + 1])] for i in range(len(path) - 1))


def _rel_text(x_phrase, rel, y_phrase, question=False):
    rel_txt = rel if rel in ("above", "below") else f"to the {rel} of"
    if question:
        return f"Is the {x_phrase} {rel_txt} the {y_phrase}?"
    return f"The {x_phrase} is {rel_txt} the {y_phrase}."


def _rel_holds(coords, x, rel, y):
    (x1, y1), (x2, y2) = coords[x], coords[y]
    dx, dy = RELATIONS[rel]
    if dx:
        return (x1 - x2) * dx > 0
    return (y1 - y2) * dy > 0


def generate_positional(spec, rng):
    """One Positional Reasoning instance with a yes/no relation question."""
    while True:
        shapes = _sample(rng, spec.shapes, spec.n_entities)
        colors = _sample(rng, spec.colors, spec.n_entities)
        phrases = {}
        for shape, color in zip(shapes, colors):
            phrases[shape] = f"{color} {shape}" if rng.random() < 0.5 else shape
        placement = _place_on_grid(rng, shapes, RELATIONS)
        if placement is None:
            continue
        coords, raw_facts = placement
        tree_edges = {frozenset((c, a)): i for i, (c, _, a) in enumerate(raw_facts)}

        extra = []
        for _ in range(spec.n_distractors):
            x, y = _sample(rng, shapes, 2)
            rels = [r for r in sorted(RELATIONS) if _rel_holds(coords, x, r, y)]
            if rels:
                extra.append((x, rels[rng.integers(len(rels))], y))
        all_facts = raw_facts + extra
        order = list(rng.permutation(len(all_facts)))
        all_facts = [all_facts[i] for i in order]

        target = "yes" if rng.random() < 0.5 else "no"
        question = None
        for _ in range(30):
            x, y = _sample(rng, shapes, 2)
            rel = sorted(RELATIONS)[rng.integers(4)]
            truth = "yes" if _rel_holds(coords, x, rel, y) else "no"
            if truth == target:
                question = (x, rel, y)
                break
        if question is None:
            continue
        x, rel, y = question

        # supporting facts: the placement-tree edges on the path between x and y
        path = _shortest_paths(
            [(c, a) for c, _, a in raw_facts], x, y)[0]
        support_idx = {tree_edges[frozenset((path[i], path[i + 1]))]
                       for i in range(len(path) - 1)}
        supporting = sorted(order.index(i) + 1 for i in support_idx)

        return Instance(
            facts=[tokenize(_rel_text(phrases[c], r, phrases[a]))
                   for c, r, a in all_facts],
            question=tokenize(_rel_text(phrases[x], rel, phrases[y], question=True)),
            answer=target,
            supporting=supporting,
        )


def oracle_positional(instance):
    """Answer recomputed by propagating facts to coordinates."""
    fact_re = re.compile(
        r"^the (.+?) is (?:(above|below)|to the (left|right) of) the (.+?) \.$")
    parsed = []
    for fact in instance.facts:
        m = fact_re.match(" ".join(fact))
        if m is None:
            raise ValueError(f"unrecognized positional fact: {fact}")
        x, rel_ab, rel_lr, y = m.groups()
        parsed.append((x, rel_ab or rel_lr, y))

    coords = {}
    pending = list(parsed)
    while pending:
        progressed = False
        remaining = []
        for x, rel, y in pending:
            dx, dy = RELATIONS[rel]
            if y in coords and x not in coords:
                coords[x] = (coords[y][0] + dx, coords[y][1] + dy)
            elif x in coords and y not in coords:
                coords[y] = (coords[x][0] - dx, coords[x][1] - dy)
            elif x not in coords and y not in coords:
                if coords:
                    remaining.append((x, rel, y))
                    continue
                coords[y] = (0, 0)
                coords[x] = (dx, dy)
            progressed = True
        if not progressed:
            raise ValueError("disconnected positional facts")
        pending = remaining

    q = re.match(
        r"^is the (.+?) (?:(above|below)|to the (left|right) of) the (.+?) \?$",
        " ".join(instance.question))
    if q is None:
        raise ValueError(f"unrecognized positional question: {instance.question}")
    x, rel_ab, rel_lr, y = q.groups()
    return "yes" if _rel_holds(coords, x, rel_ab or rel_lr, y) else "no"


def generate(spec, n):
    """Deterministic stream of ``n`` instances from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    gen = generate_path_finding if spec.task == "path_finding" else generate_positional
    return [gen(spec, rng) for _ in range(n)]


def entity_lexicon(spec):
    """Entity phrases (token tuples) usable by abstractize for this task."""
    if spec.task == "path_finding":
        return [(loc,) for loc in spec.locations]
    phrases = [(shape,) for shape in spec.shapes]
    phrases += [(color, shape) for shape in spec.shapes for color in spec.colors]
    return phrases


# ---------------------------------------------------------------------------
# abstract forms with variables


def abstractize(instance, lexicon):
    """Populate abstract fact/question forms with entity variables.

    Entity phrases are matched longest-first; a full-phrase match absorbs a
    preceding article, while a bare head-noun match (for a multi-word entity)
    keeps it. The same entity maps to the same variable everywhere in the
    instance, assigned in order of first appearance across facts then
    question.
    """
    phrases = sorted({tuple(p) for p in lexicon}, key=len, reverse=True)
    heads = {}
    for p in phrases:
        if len(p) > 1:
            heads.setdefault(p[-1], set()).add(p)
    # a head noun is usable as an alias only when unambiguous
    aliases = {h: next(iter(ps)) for h, ps in heads.items() if len(ps) == 1}

    variables = {}

    def var_for(phrase):
        if phrase not in variables:
            if len(variables) >= len(VARIABLE_SYMBOLS):
                raise ValueError("instance uses more entities than variable symbols")
            variables[phrase] = VARIABLE_SYMBOLS[len(variables)]
        return variables[phrase]

    def transform(tokens, drop_period):
        out = []
        i = 0
        while i < len(tokens):
            matched = None
            for p in phrases:
                if tuple(tokens[i:i + len(p)]) == p:
                    matched = p
                    break
            if matched is not None:
                if out and out[-1] == "the":
                    out.pop()
                out.append(var_for(matched))
                i += len(matched)
            elif tokens[i] in aliases:
                out.append(var_for(aliases[tokens[i]]))
                i += 1
            else:
                out.append(tokens[i])
                i += 1
        if drop_period and out and out[-1] == ".":
            out.pop()
        return out

    abstract_facts = [transform(f, drop_period=True) for f in instance.facts]
    abstract_question = transform(instance.question, drop_period=False)
    return Instance(
        facts=[list(f) for f in instance.facts],
        question=list(instance.question),
        answer=instance.answer,
        supporting=list(instance.supporting) if instance.supporting else None,
        abstract_facts=abstract_facts,
        abstract_question=abstract_question,
    )


# ---------------------------------------------------------------------------
# vocabulary / answer space construction


def build_vocab(instances, aux_mode="none"):
    """Vocabulary over all fact/question tokens (+ variables when abstract)."""
    if not instances:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    tokens = set()
    for inst in instances:
        for fact in inst.facts:
            tokens.update(fact)
        tokens.update(inst.question)
        if aux_mode == "abstract":
            if inst.abstract_facts is None:
                raise ValueError("abstract mode needs abstractized instances")
            for fact in inst.abstract_facts:
                tokens.update(fact)
            tokens.update(inst.abstract_question)
    return Vocabulary(sorted(tokens))


def build_answer_space(instances):
    return AnswerSpace.from_answers(inst.answer for inst in instances)
