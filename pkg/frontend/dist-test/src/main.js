/**
 * Browser entry point. Reads reader/round/seed/tier from the query string
 * and drives the session against the same origin that served this page.
 *
 *   /index.html?reader=dr_a&round=1&seed=11&tier=senior
 */
import { StudyApi } from "./api.js";
import { SessionRunner } from "./session.js";
import { CaseView } from "./view.js";
function param(name, fallback) {
    const value = new URLSearchParams(window.location.search).get(name);
    return value === null || value === "" ? fallback : value;
}
async function boot() {
    const root = document.getElementById("app");
    if (!root)
        throw new Error("missing #app container");
    const api = new StudyApi("");
    const view = new CaseView(root, document);
    const runner = new SessionRunner(api, view, {
        reader: param("reader", "anonymous"),
        round: Number(param("round", "1")),
        seed: Number(param("seed", "0")),
        tier: param("tier", "junior"),
    });
    try {
        await runner.run();
    }
    catch (err) {
        const line = document.createElement("p");
        line.className = "fatal";
        line.textContent = `Session aborted: ${err instanceof Error ? err.message : String(err)}`;
        root.appendChild(line);
    }
}
void boot();
