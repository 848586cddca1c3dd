#!/usr/bin/env python3
"""Regenerates tests/fixtures/nba_fixture.sql.

The fixture is a desk-scale NBA-style reference fact database: seven source
tables and two game-level tables that are designated as grounding tables by
default. Every row is derived from a fixed seed, so the SQL file is stable.

Usage: python3 tools/make_fixture.py > tests/fixtures/nba_fixture.sql
"""

import random

rng = random.Random(20240917)

TEAMS = [
    ("Boston Celtics", "Boston", "TD Garden", 19156, 1946, "East", "Avery Quinn"),
    ("Chicago Bulls", "Chicago", "United Center", 20917, 1966, "East", "Dale Morrow"),
    ("Dallas Mavericks", "Dallas", "American Airlines Center", 19200, 1980, "West", "Rick Lawson"),
    ("Denver Nuggets", "Denver", "Ball Arena", 19520, 1967, "West", "Mike Holt"),
    ("Golden State Warriors", "San Francisco", "Chase Center", 18064, 1946, "West", "Steve Carver"),
    ("Los Angeles Lakers", "Los Angeles", "Crypto Arena", 18997, 1947, "West", "Frank Voss"),
    ("Miami Heat", "Miami", "Kaseya Center", 19600, 1988, "East", "Erik Sutton"),
    ("New York Knicks", "New York", "Madison Square Garden", 19812, 1946, "East", "Tom Thibault"),
    ("Phoenix Suns", "Phoenix", "Footprint Center", 17071, 1968, "West", "Monty Ward"),
    ("Sacramento Kings", "Sacramento", "Golden 1 Center", 17608, 1923, "West", "Doug Christie"),
]

FIRST = ["Marcus", "Jalen", "Tyrese", "Devin", "Andre", "Kyle", "Darius", "Malik",
         "Trey", "Isaiah", "Caleb", "Jordan", "Miles", "Xavier", "Nolan", "Elijah",
         "Derrick", "Cole", "Quentin", "Rashad"]
LAST = ["Hale", "Brooks", "Whitman", "Okafor", "Lindqvist", "Navarro", "Pruitt",
        "Sampson", "Vance", "Dorsey", "Kemper", "Albright", "Foster", "Ruiz",
        "Tatum", "Greer", "Mercer", "Bishop", "Coleman", "Harlan"]
POSITIONS = ["Point Guard", "Shooting Guard", "Small Forward", "Power Forward", "Center"]
BIRTHPLACES = ["Chicago, Illinois", "Dallas, Texas", "Atlanta, Georgia",
               "Los Angeles, California", "Seattle, Washington", "Toronto, Ontario",
               "Paris, France", "Lagos, Nigeria", "Houston, Texas", "Detroit, Michigan"]
COLLEGES = ["Duke", "Kentucky", "Kansas", "UCLA", "Michigan State", "Gonzaga",
            "Villanova", "None"]
AWARDS = ["Most Valuable Player", "Rookie of the Year", "Defensive Player of the Year",
          "Sixth Man of the Year", "Most Improved Player"]
SEASONS = ["2014-15", "2015-16", "2016-17", "2017-18", "2018-19"]


def q(v):
    if v is None:
        return "NULL"
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return repr(v)


def insert(table, rows):
    for r in rows:
        print(f"INSERT INTO {table} VALUES ({', '.join(q(v) for v in r)});")


names = set()
players = []
while len(players) < 40:
    n = f"{rng.choice(FIRST)} {rng.choice(LAST)}"
    if n in names:
        continue
    names.add(n)
    pos = rng.choice(POSITIONS)
    base_h = {"Point Guard": 188, "Shooting Guard": 196, "Small Forward": 201,
              "Power Forward": 206, "Center": 212}[pos]
    players.append({
        "id": len(players) + 1,
        "name": n,
        "pos": pos,
        "height": base_h + rng.randint(-5, 6),
        "weight": 85 + (base_h - 185) + rng.randint(-6, 10),
        "birth": f"{rng.randint(1984, 2000)}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}",
        "birthplace": rng.choice(BIRTHPLACES),
        "college": rng.choice(COLLEGES),
        "team": TEAMS[len(players) % len(TEAMS)][0],
    })

print("-- Generated by tools/make_fixture.py; do not edit by hand.")
print("PRAGMA foreign_keys = OFF;")
print("BEGIN TRANSACTION;")

print("""CREATE TABLE nba_team_information (
  team_name TEXT PRIMARY KEY,
  city TEXT,
  arena TEXT,
  arena_capacity INTEGER,
  founded_year INTEGER,
  conference TEXT,
  head_coach TEXT
);""")
insert("nba_team_information", TEAMS)

print("""CREATE TABLE nba_player_information (
  player_id INTEGER PRIMARY KEY,
  player_name TEXT NOT NULL,
  position TEXT,
  height_cm INTEGER,
  weight_kg INTEGER,
  birth_date DATE,
  birthplace TEXT,
  college TEXT
);""")
insert("nba_player_information",
       [(p["id"], p["name"], p["pos"], p["height"], p["weight"], p["birth"],
         p["birthplace"], p["college"]) for p in players])

print("""CREATE TABLE nba_player_affiliation (
  player_name TEXT,
  team_name TEXT,
  season TEXT,
  jersey_number INTEGER
);""")
aff = []
for p in players:
    teams = [p["team"]]
    if rng.random() < 0.5:
        teams.insert(0, rng.choice(TEAMS)[0])
    for i, t in enumerate(teams):
        aff.append((p["name"], t, SEASONS[2 + i] if len(teams) > 1 else SEASONS[3],
                    rng.randint(0, 55)))
insert("nba_player_affiliation", aff)

print("""CREATE TABLE nba_player_award (
  player_name TEXT,
  award TEXT,
  season TEXT
);""")
awards = []
for s in SEASONS:
    for a in rng.sample(AWARDS, 4):
        awards.append((rng.choice(players)["name"], a, s))
insert("nba_player_award", awards)

print("""CREATE TABLE nba_champion_history (
  season TEXT,
  team_name TEXT,
  runner_up TEXT,
  finals_mvp TEXT,
  games_played INTEGER
);""")
champs = []
for year in range(2007, 2019):
    champ, runner = rng.sample(TEAMS, 2)
    mvp = rng.choice([p for p in players if p["team"] == champ[0]] or players)["name"]
    champs.append((f"{year}-{(year + 1) % 100:02d}", champ[0], runner[0], mvp,
                   rng.randint(4, 7)))
insert("nba_champion_history", champs)

print("""CREATE TABLE nba_draft_combine_stats (
  player_id INTEGER REFERENCES nba_player_information(player_id),
  player_name TEXT,
  draft_year INTEGER,
  draft_pick INTEGER,
  wingspan_cm REAL,
  vertical_leap_cm REAL,
  bench_press_reps INTEGER
);""")
draft = []
for p in rng.sample(players, 30):
    draft.append((p["id"], p["name"], int(p["birth"][:4]) + 20, rng.randint(1, 60),
                  round(p["height"] * 1.06 + rng.uniform(-3, 5), 1),
                  round(rng.uniform(60, 95), 1), rng.randint(3, 22)))
insert("nba_draft_combine_stats", draft)

print("""CREATE TABLE nba_salary (
  player_name TEXT,
  team_name TEXT,
  season TEXT,
  salary INTEGER
);""")
sal = []
for p in players:
    for s in SEASONS[1:4]:
        if p["team"] == "Phoenix Suns" and s == "2016-17":
            continue
        sal.append((p["name"], p["team"], s, rng.randrange(900000, 30000000, 5000)))
# Two low-salary contracts used by the refinement walkthrough: the only
# 2016-17 Phoenix Suns rows, both between 600000 and 800000.
suns = [p["name"] for p in players if p["team"] == "Phoenix Suns"]
sal.append((suns[0], "Phoenix Suns", "2016-17", 650000))
sal.append((suns[1], "Phoenix Suns", "2016-17", 700000))
insert("nba_salary", sal)

print("""CREATE TABLE game_stats (
  game_id INTEGER,
  game_date DATE,
  player_name TEXT,
  team_name TEXT,
  pts INTEGER,
  reb INTEGER,
  ast INTEGER,
  minutes INTEGER
);""")
print("""CREATE TABLE team_game_stats (
  game_id INTEGER,
  game_date DATE,
  team_name TEXT,
  opponent TEXT,
  team_pts INTEGER,
  opp_pts INTEGER,
  fg_pct REAL,
  result TEXT
);""")
gs = []
tgs = []
for g in range(1, 31):
    home, away = rng.sample(TEAMS, 2)
    date = f"2017-{rng.randint(1, 4):02d}-{rng.randint(1, 28):02d}"
    hp, ap = rng.randint(92, 128), rng.randint(90, 126)
    if hp == ap:
        hp += 3
    for t, o, tp, op in ((home, away, hp, ap), (away, home, ap, hp)):
        tgs.append((1000 + g, date, t[0], o[0], tp, op,
                    round(rng.uniform(0.38, 0.56), 3), "W" if tp > op else "L"))
        roster = [p for p in players if p["team"] == t[0]]
        for p in roster:
            gs.append((1000 + g, date, p["name"], t[0], rng.randint(0, 38),
                       rng.randint(0, 15), rng.randint(0, 12), rng.randint(8, 42)))
insert("game_stats", gs)
insert("team_game_stats", tgs)

print("COMMIT;")
