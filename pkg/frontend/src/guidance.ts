/**
 * Severity guidance panel. The text itself comes from the server payload
 * verbatim; here it is only structured for reading (headings, bullets,
 * joined paragraphs) so sentences stay contiguous in the DOM.
 */

const esc = (s: string): string =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

// no "." in the class: an all-caps word ending a wrapped sentence ("URGENT.")
// must stay inside its paragraph
const isHeading = (line: string): boolean =>
  /^[A-Z][A-Z0-9 /()'-]*(—.*)?$/.test(line.trim()) && line.trim() === line;

export function renderGuidance(text: string): string {
  const out: string[] = ['<section class="guidance"><h2>Grading guide</h2>'];
  let bullets: string[] = [];
  let paragraph: string[] = [];

  const flush = () => {
    if (bullets.length) {
      out.push(`<ul>${bullets.map((b) => `<li>${esc(b)}</li>`).join("")}</ul>`);
      bullets = [];
    }
    if (paragraph.length) {
      out.push(`<p>${esc(paragraph.join(" "))}</p>`);
      paragraph = [];
    }
  };

  for (const raw of text.split("\n")) {
    const line = raw.trimEnd();
    if (!line.trim()) {
      flush();
    } else if (/^\s+-\s/.test(line)) {
      if (paragraph.length) flush();
      bullets.push(line.replace(/^\s+-\s/, ""));
    } else if (isHeading(line)) {
      flush();
      out.push(`<h3>${esc(line)}</h3>`);
    } else {
      if (bullets.length) flush();
      paragraph.push(line.trim());
    }
  }
  flush();
  out.push("</section>");
  return out.join("");
}
