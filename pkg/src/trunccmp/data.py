"""Innings records, dataset registries, and delimited-text ingestion."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace
from datetime import date as _date
from pathlib import Path

import numpy as np

T_MAX = 10

COLUMNS = ("player", "date", "year", "opposition", "home_away", "match_innings", "toss", "runs", "wickets")
REQUIRED = ("player", "opposition", "home_away", "match_innings", "toss")

_HOME_AWAY = {"1": 1, "2": 2, "home": 1, "away": 2, "h": 1, "a": 2}
_TOSS = {"1": 1, "2": 2, "won": 1, "lost": 2, "w": 1, "l": 2}


class IngestError(ValueError):
    """Input rows failed validation; ``problems`` lists (line, message)."""

    def __init__(self, problems, n_bad=None):
        self.problems = list(problems)
        self.n_bad = len(self.problems) if n_bad is None else n_bad
        shown = "\n".join(f"  line {ln}: {msg}" for ln, msg in self.problems[:20])
        more = "" if self.n_bad <= 20 else f"\n  ... and {self.n_bad - 20} more"
        super().__init__(f"{self.n_bad} invalid row(s):\n{shown}{more}")


@dataclass(frozen=True)
class InningsRecord:
    player: int
    year: int
    runs: int
    wickets: int
    opposition: int
    home_away: int
    match_innings: int
    toss: int
    date: str = ""

    def __post_init__(self):
        if not 0 <= self.wickets <= T_MAX:
            raise ValueError(f"wickets must be in 0..{T_MAX}, got {self.wickets}")
        if self.runs < 0:
            raise ValueError(f"runs must be >= 0, got {self.runs}")
        if self.match_innings not in (1, 2, 3, 4):
            raise ValueError(f"match_innings must be 1..4, got {self.match_innings}")
        if self.home_away not in (1, 2):
            raise ValueError(f"home_away must be 1 (home) or 2 (away), got {self.home_away}")
        if self.toss not in (1, 2):
            raise ValueError(f"toss must be 1 (won) or 2 (lost), got {self.toss}")


@dataclass
class Dataset:
    records: list[InningsRecord]
    players: list[str]
    oppositions: list[str]
    source: str = field(default="", compare=False)

    def __post_init__(self):
        n_p, n_o = len(self.players), len(self.oppositions)
        for k, r in enumerate(self.records):
            if not (0 <= r.player < n_p and 0 <= r.opposition < n_o):
                raise ValueError(f"record {k} references an unregistered player or opposition")
        self._cols = None

    def __len__(self):
        return len(self.records)

    @property
    def n_players(self) -> int:
        return len(self.players)

    def columns(self) -> dict[str, np.ndarray]:
        """Columnar int64 view of the records (cached)."""
        if self._cols is None:
            names = ("player", "year", "runs", "wickets", "opposition", "home_away", "match_innings", "toss")
            arr = np.array([[getattr(r, n) for n in names] for r in self.records], dtype=np.int64).reshape(-1, len(names))
            self._cols = {n: arr[:, j].copy() for j, n in enumerate(names)}
        return self._cols

    def relabelled(self) -> "Dataset":
        """Copy with player and opposition ids in order of first appearance.

        This is the labelling :func:`ingest` produces, so a relabelled
        dataset survives a write/ingest round trip unchanged.
        """
        pmap: dict[int, int] = {}
        omap: dict[int, int] = {}
        for r in self.records:
            pmap.setdefault(r.player, len(pmap))
            omap.setdefault(r.opposition, len(omap))
        records = [replace(r, player=pmap[r.player], opposition=omap[r.opposition]) for r in self.records]
        players = [self.players[i] for i in sorted(pmap, key=pmap.get)]
        oppositions = [self.oppositions[i] for i in sorted(omap, key=omap.get)]
        return Dataset(records, players, oppositions, source=self.source)

    def player_innings(self) -> np.ndarray:
        return np.bincount(self.columns()["player"], minlength=self.n_players)

    def player_debut(self) -> np.ndarray:
        cols = self.columns()
        debut = np.full(self.n_players, np.iinfo(np.int64).max)
        np.minimum.at(debut, cols["player"], cols["year"])
        return debut

    def wicket_histogram(self) -> np.ndarray:
        return np.bincount(self.columns()["wickets"], minlength=T_MAX + 1)

    def opposition_years(self) -> dict[int, np.ndarray]:
        cols = self.columns()
        return {o: cols["year"][cols["opposition"] == o] for o in range(len(self.oppositions))}


def _detect_delimiter(header_line: str) -> str:
    return "\t" if header_line.count("\t") > header_line.count(",") else ","


def _year_from_date(text: str) -> int:
    try:
        return _date.fromisoformat(text).year
    except ValueError:
        m = re.search(r"(1[89]\d\d|20\d\d)", text)
        if m is None:
            raise ValueError(f"cannot derive a year from date {text!r}")
        return int(m.group(1))


def parse_figures(text: str) -> tuple[int, int]:
    """Runs and wickets from a scorecard string ``overs-maidens-runs-wickets``.

    >>> parse_figures("25.5-5-61-2")
    (61, 2)
    """
    parts = text.strip().split("-")
    if len(parts) != 4:
        raise ValueError(f"bowling figures {text!r} are not overs-maidens-runs-wickets")
    return int(parts[2]), int(parts[3])


def _category(value: str, table: dict, name: str) -> int:
    key = value.strip().lower()
    if key not in table:
        raise ValueError(f"{name} {value!r} not one of {sorted(set(table))}")
    return table[key]


def ingest(path, scorecard_format: bool = False, delimiter: str | None = None) -> Dataset:
    """Read and validate a delimited innings file.

    Columns (header required, order free): player, date, year, opposition,
    home_away, match_innings, toss, runs, wickets.  ``year`` may be omitted
    when ``date`` is present.  With ``scorecard_format`` a ``figures`` column
    in overs-maidens-runs-wickets form replaces runs and wickets.  Player and
    opposition ids are assigned in order of first appearance.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8-sig")
    if not text.strip():
        raise IngestError([(1, "empty file (header row required)")])
    first = text.splitlines()[0]
    reader = csv.DictReader(io.StringIO(text), delimiter=delimiter or _detect_delimiter(first))
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header
    need = list(REQUIRED) + (["figures"] if scorecard_format else ["runs", "wickets"])
    missing = [c for c in need if c not in header]
    if "year" not in header and "date" not in header:
        missing.append("year|date")
    if missing:
        raise IngestError([(1, f"missing column(s): {', '.join(missing)}")])

    players: dict[str, int] = {}
    opps: dict[str, int] = {}
    records: list[InningsRecord] = []
    problems: list[tuple[int, str]] = []
    n_bad = 0
    for line_no, row in enumerate(reader, start=2):
        try:
            date = (row.get("date") or "").strip()
            year_txt = (row.get("year") or "").strip()
            year = int(year_txt) if year_txt else _year_from_date(date)
            if scorecard_format:
                runs, wickets = parse_figures(row["figures"])
            else:
                runs, wickets = int(row["runs"]), int(row["wickets"])
            pname = row["player"].strip()
            oname = row["opposition"].strip()
            if not pname or not oname:
                raise ValueError("empty player or opposition")
            rec = dict(
                year=year,
                runs=runs,
                wickets=wickets,
                home_away=_category(row["home_away"], _HOME_AWAY, "home_away"),
                match_innings=int(row["match_innings"]),
                toss=_category(row["toss"], _TOSS, "toss"),
                date=date,
            )
            record = InningsRecord(player=players.get(pname, len(players)), opposition=opps.get(oname, len(opps)), **rec)
        except (ValueError, TypeError, KeyError, AttributeError) as exc:
            n_bad += 1
            if len(problems) < 20:
                problems.append((line_no, str(exc)))
            continue
        players.setdefault(pname, len(players))
        opps.setdefault(oname, len(opps))
        records.append(record)
    if n_bad:
        raise IngestError(problems, n_bad)
    return Dataset(records, list(players), list(opps), source=str(path))


def write_dataset(dataset: Dataset, path) -> None:
    """Write in the :func:`ingest` layout (comma separated)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in dataset.records:
            w.writerow(
                [
                    dataset.players[r.player],
                    r.date,
                    r.year,
                    dataset.oppositions[r.opposition],
                    r.home_away,
                    r.match_innings,
                    r.toss,
                    r.runs,
                    r.wickets,
                ]
            )
