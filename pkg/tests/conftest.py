import numpy as np
import pytest

from bellwether.ingest import TradingCalendar

TIMES4 = ("09:35", "09:40", "09:45", "09:50")


def calendar3(ipd: int = 4) -> TradingCalendar:
    return TradingCalendar(("2021-01-04", "2021-01-05", "2021-01-06"), ipd)


def bar_row(code, date, time, close, volume=1000.0, amount=100000.0):
    return f"{code},{date} {time},{close},{close},{close},{close},{volume},{amount}"


def write_bars_csv(path, rows):
    path.write_text("code,timestamp,open,high,low,close,volume,amount\n"
                    + "\n".join(rows) + "\n")


def write_calendar_csv(path, dates):
    path.write_text("date\n" + "\n".join(dates) + "\n")


def write_factors_csv(path, entries):
    lines = [f"{code},{date},{factor}" for code, date, factor in entries]
    path.write_text("code,date,factor\n" + "\n".join(lines) + "\n")


def full_grid_rows(code, calendar, times, price_fn=None, amount_fn=None):
    """One bar row per grid slot; price/amount may depend on (day, slot)."""
    rows = []
    for d, date in enumerate(calendar.dates):
        for k, time in enumerate(times):
            price = 10.0 if price_fn is None else price_fn(d, k)
            amount = 100000.0 if amount_fn is None else amount_fn(d, k)
            rows.append(bar_row(code, date, time, price, amount=amount))
    return rows


@pytest.fixture
def rng():
    return np.random.default_rng(20210104)
