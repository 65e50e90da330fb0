"""Survey wave calendar.

The panel is annual from 1977 through 1997 and biennial from 1999 through
2019.  Four survey years (1988-1991) collected no food expenditure data, so
they are absent from the wave list entirely and behave like holes: nothing
can be lagged across them and spell logic treats them as unknown.

Two waves are "adjacent" when they sit at the survey's regular spacing:
one year apart in the annual era, two years apart once the biennial era
starts (which also covers the single 1997 -> 1999 step).  The five-year jump
from 1987 to 1992 is *not* adjacent even though no wave sits between the
two years.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

GAP_YEARS = frozenset({1988, 1989, 1990, 1991})


@dataclass(frozen=True)
class WaveCalendar:
    """Ordered survey years plus the adjacency rule between them."""

    waves: tuple[int, ...]
    gap_years: frozenset[int] = field(default_factory=frozenset)
    biennial_start: int | None = 1999

    def __post_init__(self) -> None:
        if not self.waves:
            raise ConfigError("wave calendar must contain at least one wave")
        if list(self.waves) != sorted(set(self.waves)):
            raise ConfigError("wave calendar years must be strictly increasing")
        overlap = set(self.waves) & set(self.gap_years)
        if overlap:
            raise ConfigError(f"gap years {sorted(overlap)} also appear as waves")

    def __contains__(self, year: int) -> bool:
        return year in self._index

    @property
    def _index(self) -> dict[int, int]:
        # cached on first use; object is frozen so this is safe
        idx = self.__dict__.get("_index_cache")
        if idx is None:
            idx = {y: i for i, y in enumerate(self.waves)}
            object.__setattr__(self, "_index_cache", idx)
        return idx

    def index(self, year: int) -> int:
        try:
            return self._index[year]
        except KeyError:
            raise ConfigError(f"{year} is not a survey wave") from None

    def prev_wave(self, year: int) -> int | None:
        """The wave immediately before `year` in the calendar, if any."""
        i = self.index(year)
        return self.waves[i - 1] if i > 0 else None

    def next_wave(self, year: int) -> int | None:
        i = self.index(year)
        return self.waves[i + 1] if i + 1 < len(self.waves) else None

    def adjacent(self, earlier: int, later: int) -> bool:
        """True when `later` directly follows `earlier` at regular spacing."""
        if earlier not in self._index or later not in self._index:
            return False
        if self.index(later) - self.index(earlier) != 1:
            return False
        span = later - earlier
        if span == 1:
            return True
        return (
            span == 2
            and self.biennial_start is not None
            and later >= self.biennial_start
        )

    def lag_year(self, year: int) -> int | None:
        """Survey year usable as the lag source for `year`, or None.

        Only the immediately preceding wave qualifies, and only when it is
        adjacent: rows straddling the 1988-1991 hole have no usable lag.
        """
        prev = self.prev_wave(year)
        if prev is not None and self.adjacent(prev, year):
            return prev
        return None

    def waves_between(self, start: int, end: int) -> tuple[int, ...]:
        """All waves y with start <= y <= end."""
        return tuple(y for y in self.waves if start <= y <= end)


def default_calendar() -> WaveCalendar:
    """Annual 1977-1997 without the 1988-1991 hole, biennial 1999-2019."""
    annual = [y for y in range(1977, 1998) if y not in GAP_YEARS]
    biennial = list(range(1999, 2020, 2))
    return WaveCalendar(
        waves=tuple(annual + biennial),
        gap_years=GAP_YEARS,
        biennial_start=1999,
    )


def unit_calendar(n_waves: int, start: int = 2000) -> WaveCalendar:
    """Small consecutive annual calendar, handy for tests and oracles."""
    return WaveCalendar(
        waves=tuple(range(start, start + n_waves)),
        gap_years=frozenset(),
        biennial_start=None,
    )
