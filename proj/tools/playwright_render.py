#!/usr/bin/env python3
"""Headless-browser renderer used by `--renderer browser`.

Writes a screenshot and a geometry file listing the box of every element
carrying a data-el attribute. Requires the `playwright` package and an
installed chromium.
"""
import argparse
import json
import pathlib
import sys

GEOMETRY_JS = """
() => Array.from(document.querySelectorAll('[data-el]')).map(el => {
  const r = el.getBoundingClientRect();
  const root = document.querySelector('.slide').getBoundingClientRect();
  return {id: el.dataset.id || '', type: el.dataset.el, x: r.left - root.left, y: r.top - root.top,
          w: r.width, h: r.height, scroll_h: Math.max(r.height, el.scrollHeight)};
})
"""


def main() -> int:
    p = argparse.ArgumentParser()
    p.add_argument("--html", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--png", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=720)
    a = p.parse_args()
    try:
        from playwright.sync_api import sync_playwright
    except ImportError:
        print("playwright is not installed", file=sys.stderr)
        return 2
    markup = pathlib.Path(a.html).read_text(encoding="utf-8")
    base = pathlib.Path(a.base).resolve().as_uri() + "/"
    markup = markup.replace("<head>", f'<head><base href="{base}">', 1)
    with sync_playwright() as pw:
        browser = pw.chromium.launch()
        page = browser.new_page(viewport={"width": a.width, "height": a.height})
        page.set_content(markup, wait_until="load")
        page.screenshot(path=a.png, clip={"x": 0, "y": 0, "width": a.width, "height": a.height})
        elements = page.evaluate(GEOMETRY_JS)
        browser.close()
    pathlib.Path(a.geometry).write_text(json.dumps({"elements": elements, "log": []}), encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
