/**
 * Typed client for the study-service HTTP JSON API.
 *
 * The server is the source of truth for everything: session order, resume
 * position, duplicate detection. This module only moves JSON.
 */
/** HTTP-level failure with the server's error text. */
export class ApiError extends Error {
    status;
    constructor(status, message) {
        super(message);
        this.status = status;
        this.name = "ApiError";
    }
    get isConflict() {
        return this.status === 409;
    }
}
async function parseError(resp) {
    let message = `HTTP ${resp.status}`;
    try {
        const body = (await resp.json());
        if (body.error)
            message = body.error;
    }
    catch {
        /* non-JSON error body: keep the status text */
    }
    return new ApiError(resp.status, message);
}
export class StudyApi {
    baseUrl;
    constructor(baseUrl = "") {
        this.baseUrl = baseUrl;
    }
    imageUrl(ref) {
        return ref.startsWith("/") ? this.baseUrl + ref : ref;
    }
    async getSession(reader, round, seed, tier) {
        const url = `${this.baseUrl}/session/${encodeURIComponent(reader)}/${round}` +
            `?seed=${seed}&tier=${encodeURIComponent(tier)}`;
        const resp = await fetch(url);
        if (!resp.ok)
            throw await parseError(resp);
        return (await resp.json());
    }
    async submitResponse(body) {
        const resp = await fetch(`${this.baseUrl}/response`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
        if (!resp.ok)
            throw await parseError(resp);
        return (await resp.json());
    }
    async getReport() {
        const resp = await fetch(`${this.baseUrl}/report`);
        if (!resp.ok)
            throw await parseError(resp);
        return await resp.json();
    }
}
