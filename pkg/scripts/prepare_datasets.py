"""Convert the raw public fairness datasets into headered CSV files.

The audit tool only reads local, headered CSV. The raw distributions differ:

* German credit (UCI ``german.data``): space separated, no header.
* Adult (UCI ``adult.data``): comma+space separated, no header.
* COMPAS (ProPublica ``compas-scores-two-years.csv``): headered, but needs the
  usual ProPublica row filter.
* Default of credit card clients (UCI ``default of credit card clients.xls``):
  export the sheet to CSV first (second header row holds the column names).

Usage::

    python scripts/prepare_datasets.py german path/to/german.data data/german.csv
    python scripts/prepare_datasets.py adult path/to/adult.data data/adult.csv
    python scripts/prepare_datasets.py compas path/to/compas-scores-two-years.csv data/compas.csv
    python scripts/prepare_datasets.py default path/to/default.csv data/default.csv
"""

import argparse
import csv
import sys

GERMAN_COLUMNS = [
    "status", "duration", "credit_history", "purpose", "credit_amount",
    "savings", "present_employment", "installment_rate", "status_sex",
    "other_debtors", "present_residence_since", "property", "age",
    "installment_plans", "housing", "number_of_existing_credits", "job",
    "number_of_people_liable_for", "telephone", "foreign_worker", "credit",
]

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]


def _write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {path}", file=sys.stderr)


def german(src, dst):
    with open(src, encoding="utf-8") as fh:
        rows = [line.split() for line in fh if line.strip()]
    _write(dst, GERMAN_COLUMNS, rows)


def adult(src, dst):
    rows = []
    with open(src, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip().rstrip(".")
            if not line or line.startswith("|"):
                continue
            rows.append([cell.strip() for cell in line.split(",")])
    _write(dst, ADULT_COLUMNS, rows)


def compas(src, dst):
    with open(src, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        kept = []
        for row in reader:
            # ProPublica analysis filter
            try:
                days = int(row["days_b_screening_arrest"])
            except ValueError:
                continue
            if abs(days) > 30 or row["is_recid"] == "-1":
                continue
            if row["c_charge_degree"] == "O" or row["score_text"] == "N/A":
                continue
            kept.append([row[c] for c in header])
    # the raw file repeats "decile_score" and ends with an empty column
    seen = {}
    names = []
    for name in header:
        name = name or "unnamed"
        seen[name] = seen.get(name, 0) + 1
        names.append(name if seen[name] == 1 else f"{name}.{seen[name] - 1}")
    _write(dst, names, kept)


def default(src, dst):
    with open(src, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    # the xls export carries a spurious first header row (X1..X23)
    if rows and rows[0] and rows[0][-1].startswith("Y"):
        rows = rows[1:]
    header = [c.strip().replace(" ", "_").lower() for c in rows[0]]
    _write(dst, header, rows[1:])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dataset", choices=["german", "adult", "compas", "default"])
    parser.add_argument("src")
    parser.add_argument("dst")
    args = parser.parse_args(argv)
    {"german": german, "adult": adult, "compas": compas, "default": default}[args.dataset](
        args.src, args.dst
    )


if __name__ == "__main__":
    main()
