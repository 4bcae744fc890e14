#!/usr/bin/env python3
"""Writes the segmenter fixture policies (policies/NN.html + NN.json).

Each sidecar lists the body units (sentences and list items) that must
appear exactly once in the segmented output, the list intros with the
number of times they may appear, and boilerplate strings that must not
appear at all.

Re-run only when changing the fixture design; the outputs are committed.
"""
import json
import random
from pathlib import Path

OUT = Path(__file__).parent / "policies"

SUBJECTS = ["We", "Our company", "The service", "Our partners", "Our team", "This website", "The app"]
VERBS = ["collect", "store", "process", "share", "retain", "protect", "review", "delete", "encrypt", "analyze"]
OBJECTS = ["contact details", "device identifiers", "payment records", "usage logs", "location history",
           "browsing activity", "support tickets", "account settings", "survey answers", "purchase history",
           "cookie data", "profile photos", "billing addresses", "error reports", "login timestamps"]
TAILS = ["for security purposes", "to improve our products", "when required by law", "for marketing campaigns",
         "to personalize content", "for fraud prevention", "with your consent", "for research and analytics",
         "to provide customer support", "for as long as your account is active"]
ITEM_NOUNS = ["your name", "your email address", "your postal address", "your phone number", "your birth date",
              "your gender", "your job title", "your company name", "your IP address", "your browser type",
              "your language preference", "your time zone", "your referring page", "your payment card",
              "your shipping address", "your social profile", "your photos", "your contacts list"]
ORDINALS = ["first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
            "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth", "sixteenth", "seventeenth",
            "eighteenth", "nineteenth", "twentieth", "twenty-first", "twenty-second", "twenty-third",
            "twenty-fourth", "twenty-fifth", "twenty-sixth", "twenty-seventh", "twenty-eighth", "twenty-ninth",
            "thirtieth", "thirty-first", "thirty-second", "thirty-third", "thirty-fourth", "thirty-fifth",
            "thirty-sixth", "thirty-seventh", "thirty-eighth", "thirty-ninth", "fortieth", "forty-first",
            "forty-second", "forty-third", "forty-fourth", "forty-fifth", "forty-sixth", "forty-seventh",
            "forty-eighth", "forty-ninth", "fiftieth"]

BOILERPLATE_HEAD = """<!DOCTYPE html>
<html lang="en">
<head>
  <meta charset="utf-8">
  <title>Privacy Policy | {site}</title>
  <style>body {{ font-family: sans-serif; }} .menu {{ color: red; }}</style>
  <script>window.analytics = {{ track: function() {{ return "TRACKER_SCRIPT_{n}"; }} }};</script>
</head>
<body>
<header><div class="logo">{site} HEADER_BANNER_{n}</div></header>
<nav class="menu"><ul><li><a href="/">Home NAV_HOME_{n}</a></li><li><a href="/about">About us</a></li><li><a href="/jobs">Careers</a></li></ul></nav>
<!-- tracking pixel COMMENT_MARKER_{n} -->
<main>
"""

BOILERPLATE_TAIL = """</main>
<aside><p>Related links SIDEBAR_LINKS_{n}</p></aside>
<div role="navigation"><a href="/sitemap">Sitemap ROLE_NAV_{n}</a></div>
<footer><p>Copyright 2018 {site} FOOTER_TEXT_{n}.</p><a href="/terms">Terms</a> | <a href="/privacy">Privacy</a></footer>
<noscript>Enable JavaScript NOSCRIPT_{n}</noscript>
</body>
</html>
"""


class Gen:
    def __init__(self, seed):
        self.rng = random.Random(seed)
        self.counter = 0
        self.items = list(ITEM_NOUNS)
        self.rng.shuffle(self.items)

    def sentence(self):
        self.counter += 1
        s = "{} {} {} {} in the {} clause".format(
            self.rng.choice(SUBJECTS), self.rng.choice(VERBS), self.rng.choice(OBJECTS),
            self.rng.choice(TAILS), ORDINALS[self.counter - 1])
        return s + "."

    def item(self):
        return self.items.pop()

    def long_item(self):
        # Two sentences, always above twenty words.
        return self.sentence() + " " + self.sentence()


def inline_markup(rng, s):
    words = s.split(" ")
    if len(words) > 4 and rng.random() < 0.5:
        k = rng.randrange(1, len(words) - 2)
        tag = rng.choice(["strong", "em", "a href=\"#x\"", "span"])
        close = tag.split(" ")[0]
        words[k] = "<{}>{}</{}>".format(tag, words[k], close)
    return " ".join(words)


def make_policy(n):
    g = Gen(1000 + n)
    rng = g.rng
    site = "Example{}".format(n)
    body = []
    units = []
    intros = {}

    def para(k, wrapper="p"):
        sents = [g.sentence() for _ in range(k)]
        units.extend(sents)
        text = " ".join(inline_markup(rng, s) for s in sents)
        body.append("<{0}>{1}</{0}>".format(wrapper, text) if wrapper != "raw" else text)

    sections = rng.randint(3, 5)
    for sec in range(sections):
        heading = "Section {} of the {} policy".format(ORDINALS[sec].capitalize(), site)
        units.append(heading)
        body.append("<h2>{}</h2>".format(heading))
        kind = rng.choice(["paras", "short_list", "long_list", "nested", "div_mix"])
        para(rng.randint(1, 3))
        if kind == "short_list":
            intro = "In the {} list we may collect the following details:".format(ORDINALS[10 + sec])
            para_sents = [g.sentence()]
            units.extend(para_sents)
            body.append("<p>{} {}</p>".format(para_sents[0], intro))
            items = [g.item() for _ in range(rng.randint(2, 4))]
            units.extend(items)
            intros[intro] = 1
            body.append("<ul>" + "".join("<li>{};</li>".format(i) for i in items) + "</ul>")
        elif kind == "long_list":
            intro = "The {} set of practices is described below:".format(ORDINALS[20 + sec])
            body.append("<p>{}</p>".format(intro))
            items = [g.long_item() for _ in range(rng.randint(2, 3))]
            for it in items:
                units.extend(s + "." for s in it.rstrip(".").split(". "))
            intros[intro] = len(items)
            body.append("<ol>" + "".join("<li>{}</li>".format(i) for i in items) + "</ol>")
        elif kind == "nested":
            intro = "Information is gathered in the {} set of ways:".format(ORDINALS[30 + sec])
            inner_intro = "The {} category covers:".format(ORDINALS[40 + sec])
            body.append("<div><p>{}</p>".format(intro))
            first = g.long_item()
            second_lead = g.sentence()
            inner = [g.item() for _ in range(3)]
            units.extend(s + "." for s in first.rstrip(".").split(". "))
            units.append(second_lead)
            units.extend(inner)
            intros[intro] = 2
            intros[inner_intro] = 1
            body.append("<ul><li>{}</li><li>{} {}<ul>{}</ul></li></ul></div>".format(
                first, second_lead, inner_intro, "".join("<li>{}</li>".format(i) for i in inner)))
        elif kind == "div_mix":
            s1, s2 = g.sentence(), g.sentence()
            units.extend([s1, s2])
            body.append("<div>{}<p>{}</p></div>".format(s1, s2))
        else:
            para(rng.randint(2, 4), "div")
    body.append("<p>Terms &amp; conditions of the {} site apply&nbsp;here.</p>".format(site))
    units.append("Terms & conditions of the {} site apply here.".format(site))
    body.append("<p>Questions about this policy can be sent to privacy@example{}.com today.</p>".format(n))
    units.append("Questions about this policy can be sent to privacy@example{}.com today.".format(n))

    # Uniqueness: no unit or intro may be a substring of another.
    everything = units + list(intros)
    for a in everything:
        for b in everything:
            assert a is b or a not in b, (a, b)

    boiler = [m.format(n) for m in ["TRACKER_SCRIPT_{}", "HEADER_BANNER_{}", "NAV_HOME_{}", "COMMENT_MARKER_{}",
                                    "SIDEBAR_LINKS_{}", "ROLE_NAV_{}", "FOOTER_TEXT_{}", "NOSCRIPT_{}"]]
    html = BOILERPLATE_HEAD.format(site=site, n=n) + "\n".join(body) + "\n" + BOILERPLATE_TAIL.format(site=site, n=n)
    return html, {"units": [u for u in units if u not in intros], "intros": intros, "boilerplate": boiler}


def make_blocks45():
    g = Gen(45)
    parts = ["<html><body>"]
    for i in range(45):
        s = g.sentence()
        if i % 9 == 4:
            parts.append("<div><div><p>{}</p></div></div>".format(s))
        elif i % 5 == 0:
            parts.append("<div>{}</div>".format(s))
        else:
            parts.append("<p>{}</p>".format(s))
    parts.append("</body></html>")
    return "\n".join(parts)


def main():
    OUT.mkdir(exist_ok=True)
    for n in range(20):
        html, side = make_policy(n)
        (OUT / "{:02d}.html".format(n)).write_text(html)
        (OUT / "{:02d}.json".format(n)).write_text(json.dumps(side, indent=1) + "\n")
    (OUT.parent / "blocks45.html").write_text(make_blocks45() + "\n")


if __name__ == "__main__":
    main()
