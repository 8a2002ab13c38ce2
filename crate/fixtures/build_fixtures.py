"""Regenerates the fixture databases, datasets and backend scripts.

    python3 fixtures/build_fixtures.py
"""

import json
import sqlite3
from pathlib import Path

HERE = Path(__file__).resolve().parent

CONCERT_SINGER = """
CREATE TABLE stadium (
    stadium_id INTEGER PRIMARY KEY,
    location TEXT,
    name TEXT,
    capacity INTEGER,
    highest INTEGER,
    lowest INTEGER,
    average INTEGER
);
CREATE TABLE singer (
    singer_id INTEGER PRIMARY KEY,
    name TEXT,
    country TEXT,
    song_name TEXT,
    song_release_year TEXT,
    age INTEGER,
    is_male TEXT
);
CREATE TABLE concert (
    concert_id INTEGER PRIMARY KEY,
    concert_name TEXT,
    theme TEXT,
    stadium_id INTEGER REFERENCES stadium(stadium_id),
    year TEXT
);
CREATE TABLE singer_in_concert (
    concert_id INTEGER REFERENCES concert(concert_id),
    singer_id INTEGER REFERENCES singer(singer_id),
    PRIMARY KEY (concert_id, singer_id)
);
INSERT INTO stadium VALUES
    (1, 'Raith Rovers', 'Stark''s Park', 10104, 4812, 1294, 2106),
    (2, 'Ayr United', 'Somerset Park', 11998, 2363, 1057, 1477),
    (3, 'East Fife', 'Bayview Stadium', 2000, 1980, 533, 864),
    (4, 'Queen''s Park', 'Hampden Park', 52500, 1763, 466, 730),
    (5, 'Stirling Albion', 'Forthbank Stadium', 3808, 1125, 404, 642),
    (6, 'Arbroath', 'Gayfield Park', 4125, 921, 411, 638),
    (7, 'Alloa Athletic', 'Recreation Park', 3100, 1057, 331, 637),
    (9, 'Peterhead', 'Balmoor', 4000, 837, 400, 615),
    (10, 'Brechin City', 'Glebe Park', 3960, 780, 315, 552);
INSERT INTO singer VALUES
    (1, 'Joe Sharp', 'Netherlands', 'You', '1992', 52, 'F'),
    (2, 'Timbaland', 'United States', 'Dangerous', '2008', 32, 'T'),
    (3, 'Justin Brown', 'France', 'Hey Oh', '2013', 29, 'T'),
    (4, 'Rose White', 'France', 'Sun', '2003', 41, 'F'),
    (5, 'John Nizinik', 'France', 'Gentleman', '2014', 43, 'T'),
    (6, 'Tribal King', 'France', 'Love', '2016', 25, 'T');
INSERT INTO concert VALUES
    (1, 'Auditions', 'Free choice', 1, '2014'),
    (2, 'Super bootcamp', 'Free choice 2', 2, '2014'),
    (3, 'Home Visits', 'Bleeding Love', 2, '2015'),
    (4, 'Week 1', 'Wide Awake', 10, '2014'),
    (5, 'Week 1', 'Happy Tonight', 9, '2015'),
    (6, 'Week 2', 'Party All Night', 7, '2015');
INSERT INTO singer_in_concert VALUES
    (1, 2), (1, 3), (1, 5), (2, 3), (2, 6), (3, 5), (4, 4), (5, 6), (5, 3), (6, 2);
"""

RETAIL = """
CREATE TABLE customers (
    customer_id INTEGER PRIMARY KEY,
    name TEXT NOT NULL,
    segment TEXT,
    country TEXT
);
CREATE TABLE products (
    product_id INTEGER PRIMARY KEY,
    name TEXT NOT NULL,
    category TEXT,
    price REAL
);
CREATE TABLE orders (
    order_id INTEGER PRIMARY KEY,
    customer_id INTEGER REFERENCES customers(customer_id),
    product_id INTEGER REFERENCES products(product_id),
    quantity INTEGER,
    order_date TEXT,
    status TEXT
);
INSERT INTO customers VALUES
    (1, 'Ada Park', 'Consumer', 'Germany'),
    (2, 'Ben Ortiz', 'Corporate', 'USA'),
    (3, 'Chloe Brandt', 'Corporate', 'Germany'),
    (4, 'Dev Rao', 'Small Business', 'India'),
    (5, 'Elena Rossi', 'Consumer', 'Italy'),
    (6, 'Farid Haddad', 'Corporate', 'France'),
    (7, 'Grace Liu', 'Small Business', 'USA'),
    (8, 'Hugo Weber', 'Consumer', 'Germany');
INSERT INTO products VALUES
    (1, 'Oak Desk', 'Furniture', 249.0),
    (2, 'Task Chair', 'Furniture', 129.5),
    (3, 'Desk Lamp', 'Office Supplies', 34.99),
    (4, 'Notebook Pack', 'Office Supplies', 12.0),
    (5, 'Monitor', 'Technology', 189.0),
    (6, 'Bookshelf', 'Furniture', 99.0),
    (7, 'Headset', 'Technology', 59.0);
INSERT INTO orders VALUES
    (1, 2, 1, 1, '2022-11-03', 'delivered'),
    (2, 2, 3, 4, '2023-01-15', 'shipped'),
    (3, 2, 5, 2, '2023-02-20', 'shipped'),
    (4, 3, 2, 2, '2023-03-05', 'delivered'),
    (5, 3, 4, 10, '2023-03-18', 'pending'),
    (6, 3, 3, 1, '2023-06-01', 'shipped'),
    (7, 1, 4, 5, '2022-12-12', 'delivered'),
    (8, 1, 4, 3, '2023-07-09', 'cancelled'),
    (9, 1, 2, 1, '2023-08-22', 'shipped'),
    (10, 1, 3, 2, '2023-09-30', 'delivered'),
    (11, 4, 5, 1, '2023-04-11', 'pending'),
    (12, 5, 1, 1, '2024-01-08', 'shipped'),
    (13, 6, 2, 3, '2023-05-14', 'delivered'),
    (14, 7, 3, 6, '2024-02-02', 'shipped'),
    (15, 2, 4, 2, '2024-03-03', 'pending');
"""

# (question, gold, difficulty, db, generator completion, expected label)
MINI = [
    ("How many singers are there?",
     "SELECT count(*) FROM singer", "simple", "concert_singer",
     " count(*) FROM singer", "exact"),
    ("What are the names of singers from France?",
     "SELECT name FROM singer WHERE country = 'France'", "simple", "concert_singer",
     " name FROM singer WHERE country = 'France'", "exact"),
    ("What is the average age of all singers?",
     "SELECT avg(age) FROM singer", "simple", "concert_singer",
     "SELECT avg(age) FROM singer", "exact"),
    ("List the names of stadiums with capacity above 5000.",
     "SELECT name FROM stadium WHERE capacity > 5000", "simple", "concert_singer",
     "```sql\nSELECT name FROM stadium WHERE capacity > 5000\n```", "exact"),
    ("How many singers are from each country?",
     "SELECT country, count(*) FROM singer GROUP BY country", "moderate", "concert_singer",
     " country, count(singer_id) FROM singer GROUP BY country", "equivalent"),
    ("What is the name of the oldest singer?",
     "SELECT name FROM singer ORDER BY age DESC LIMIT 1", "moderate", "concert_singer",
     " name FROM singer WHERE age = (SELECT max(age) FROM singer)", "equivalent"),
    ("Show the names of concerts held in 2014 and their stadium names.",
     "SELECT T1.concert_name, T2.name FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id WHERE T1.year = '2014'",
     "moderate", "concert_singer",
     " T1.concert_name, T2.name FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id", "wrong"),
    ("How many concerts took place at each stadium?",
     "SELECT T2.name, count(*) FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id GROUP BY T1.stadium_id",
     "moderate", "concert_singer",
     " T2.name, count(*) FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id", "wrong"),
    ("Which stadiums never hosted a concert?",
     "SELECT name FROM stadium WHERE stadium_id NOT IN (SELECT stadium_id FROM concert)",
     "challenging", "concert_singer",
     " name FROM stadium WHERE stadium_id NOT IN (SELECT stadium_id FROM concerts)", "error"),
    ("What are the names of singers who performed in more than one concert?",
     "SELECT T2.name FROM singer_in_concert AS T1 JOIN singer AS T2 ON T1.singer_id = T2.singer_id GROUP BY T1.singer_id HAVING count(*) > 1",
     "challenging", "concert_singer",
     " T2.name FROM singer_in_concert AS T1 JOIN singer AS T2 ON T1.singer_id = T2.singer_id GROUP BY T1.singer_id HAVING count(*) >= 1", "wrong"),
    ("How many customers are there?",
     "SELECT count(*) FROM customers", "simple", "retail",
     " count(*) FROM customers", "exact"),
    ("List the names of products in the Furniture category.",
     "SELECT name FROM products WHERE category = 'Furniture'", "simple", "retail",
     " name FROM products WHERE category = 'Furniture'", "exact"),
    ("What is the highest product price?",
     "SELECT max(price) FROM products", "simple", "retail",
     " max(price) FROM products", "exact"),
    ("How many orders have the status shipped?",
     "SELECT count(*) FROM orders WHERE status = 'shipped'", "simple", "retail",
     " count(*) FROM orders WHERE status = 'shipped'", "exact"),
    ("What is the total quantity ordered for each product?",
     "SELECT T2.name, sum(T1.quantity) FROM orders AS T1 JOIN products AS T2 ON T1.product_id = T2.product_id GROUP BY T1.product_id",
     "moderate", "retail",
     " T2.product_name, sum(T1.quantity) FROM orders AS T1 JOIN products AS T2 ON T1.product_id = T2.product_id GROUP BY T1.product_id", "error"),
    ("Which customers are from Germany?",
     "SELECT name FROM customers WHERE country = 'Germany'", "moderate", "retail",
     " name FROM customers WHERE country IN ('Germany')", "equivalent"),
    ("How many distinct customers placed orders in 2023?",
     "SELECT count(DISTINCT customer_id) FROM orders WHERE order_date LIKE '2023%'", "moderate", "retail",
     " count(customer_id) FROM orders WHERE order_date LIKE '2023%'", "wrong"),
    ("What is the name of the customer who spent the most in total?",
     "SELECT T1.name FROM customers AS T1 JOIN orders AS T2 ON T1.customer_id = T2.customer_id JOIN products AS T3 ON T2.product_id = T3.product_id GROUP BY T1.customer_id ORDER BY sum(T2.quantity * T3.price) DESC LIMIT 1",
     "challenging", "retail",
     " T1.name FROM customers AS T1 JOIN orders AS T2 ON T1.customer_id = T2.customer_id GROUP BY T1.customer_id ORDER BY sum(T2.amount) DESC LIMIT 1", "error"),
    ("Which products have never been ordered?",
     "SELECT name FROM products WHERE product_id NOT IN (SELECT product_id FROM orders)", "challenging", "retail",
     " p.name FROM products AS p LEFT JOIN orders AS o ON p.product_id = o.product_id WHERE o.order_id IS NULL", "equivalent"),
    ("List customers in the Corporate segment who ordered more than 2 times.",
     "SELECT T1.name FROM customers AS T1 JOIN orders AS T2 ON T1.customer_id = T2.customer_id WHERE T1.segment = 'Corporate' GROUP BY T1.customer_id HAVING count(*) > 2",
     "challenging", "retail",
     " T1.name FROM customers AS T1 JOIN orders AS T2 ON T1.customer_id = T2.customer_id GROUP BY T1.customer_id HAVING count(*) > 2", "wrong"),
]

# Each class is repaired by exactly one stage.
#   ses: generator writes the right literal only when the schema shows it
#   abe: generator's SQL runs but is wrong; the eliminator fixes it
#   dea: generator's SQL errors; reflect/correct fixes it
#   base: right in every configuration
ABLATION = [
    dict(cls="ses", db="concert_singer",
         q="How many singers come from the netherlands?",
         gold="SELECT count(*) FROM singer WHERE country = 'Netherlands'",
         hint="'Netherlands'",
         with_hint=" count(*) FROM singer WHERE country = 'Netherlands'",
         without_hint=" count(*) FROM singer WHERE country = 'netherlands'"),
    dict(cls="ses", db="retail",
         q="Which customers belong to the small business segment?",
         gold="SELECT name FROM customers WHERE segment = 'Small Business'",
         hint="'Small Business'",
         with_hint=" name FROM customers WHERE segment = 'Small Business'",
         without_hint=" name FROM customers WHERE segment = 'small business'"),
    dict(cls="abe", db="concert_singer",
         q="Which singers are older than 40?",
         gold="SELECT name FROM singer WHERE age > 40",
         pre=" name FROM singer WHERE age < 40",
         fix="SELECT name FROM singer WHERE age > 40"),
    dict(cls="abe", db="retail",
         q="List the names of products cheaper than 100.",
         gold="SELECT name FROM products WHERE price < 100",
         pre=" name FROM products WHERE price > 100",
         fix="SELECT name FROM products WHERE price < 100"),
    dict(cls="dea", db="concert_singer",
         q="What is the name of the largest stadium by capacity?",
         gold="SELECT name FROM stadium ORDER BY capacity DESC LIMIT 1",
         pre=" name FROM stadium ORDER BY size DESC LIMIT 1",
         reason="The stadium table has no column named size; capacity holds the stadium size.",
         fix=" name FROM stadium ORDER BY capacity DESC LIMIT 1"),
    dict(cls="dea", db="retail",
         q="What is the total quantity across all orders?",
         gold="SELECT sum(quantity) FROM orders",
         pre=" sum(qty) FROM orders",
         reason="The orders table has no qty column; the column is called quantity.",
         fix=" sum(quantity) FROM orders"),
    dict(cls="base", db="concert_singer",
         q="How many concerts are there?",
         gold="SELECT count(*) FROM concert",
         pre=" count(*) FROM concert"),
    dict(cls="base", db="retail",
         q="How many products are there?",
         gold="SELECT count(*) FROM products",
         pre=" count(*) FROM products"),
]


def question_key(q):
    return f"### Question: {q}\n"


def sql_key(sql):
    return f"### SQLite SQL query: {sql}\n"


def full(completion):
    c = completion.strip()
    return c if c.lower().startswith("select") else f"SELECT {c}"


def rule(kind, contains, response):
    return {"kind": kind, "contains": contains, "responses": [response], "repeat_last": True}


def build_db(path, ddl):
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()
    conn = sqlite3.connect(path)
    conn.executescript(ddl)
    conn.commit()
    conn.close()


def write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def main():
    build_db(HERE / "databases/concert_singer/concert_singer.sqlite", CONCERT_SINGER)
    build_db(HERE / "databases/retail/retail.sqlite", RETAIL)

    write_json(HERE / "mini_dev.json", [
        {"question_id": i, "db_id": db, "question": q, "SQL": gold, "difficulty": d}
        for i, (q, gold, d, db, _, _) in enumerate(MINI)
    ])
    write_json(HERE / "mini_dev_mix.json", {
        str(i): label for i, (*_, label) in enumerate(MINI)
    })
    write_json(HERE / "scripts/generator_mix.json", {
        "rules": [rule("generation", [question_key(q)], c) for q, _, _, _, c, _ in MINI],
    })

    write_json(HERE / "ablation.json", [
        {"question_id": f"abl-{i}", "db_id": a["db"], "question": a["q"], "SQL": a["gold"]}
        for i, a in enumerate(ABLATION)
    ])
    rules = []
    for a in ABLATION:
        key = question_key(a["q"])
        if a["cls"] == "ses":
            rules.append(rule("generation", [key, a["hint"]], a["with_hint"]))
            rules.append(rule("generation", [key], a["without_hint"]))
        else:
            rules.append(rule("generation", [key], a["pre"]))
        if a["cls"] == "abe":
            rules.append(rule("elimination", [key], a["fix"]))
        if a["cls"] == "dea":
            rules.append(rule("reflect", [key], a["reason"]))
            rules.append(rule("correct", [key], a["fix"]))
    # every other elimination call returns the SQL it was shown
    for a in ABLATION:
        if a["cls"] == "abe":
            continue
        for c in [a.get("with_hint"), a.get("without_hint"), a.get("pre")]:
            if c is not None:
                rules.append(rule("elimination", [question_key(a["q"]), sql_key(full(c))], full(c)))
    write_json(HERE / "scripts/ablation.json", {"model": "scripted", "rules": rules})

    write_json(HERE / "config.json", {
        "enhancement": {"k": 200, "m": 2},
        "executor": {"timeout_s": 5, "max_rows": 10000},
        "pipeline": {"max_iters": 5, "parallelism": 4},
        "gateway": {
            "backend": "http",
            "prices": {"scripted": {"input": 1.5e-6, "output": 2e-6}},
        },
    })


if __name__ == "__main__":
    main()
