import { describe, expect, it } from "vitest";

import { EditingClient, ServiceError } from "../src/client.js";
import { BASE, MockService, makeInfo } from "./mock-service.js";

describe("EditingClient", () => {
  it("fetches model info with a bare GET", async () => {
    const svc = new MockService();
    const client = new EditingClient(BASE, svc.fetch);
    const info = await client.modelInfo();
    expect(info).toEqual(makeInfo());
    expect(svc.calls).toEqual([{ path: "/model-info", body: null }]);
  });

  it("posts edits as JSON pairs", async () => {
    const svc = new MockService();
    const client = new EditingClient(BASE, svc.fetch);
    const resp = await client.edit([0.1, 0.2, 0.3, 0.4], [[1, 2.5]]);
    expect(svc.calls[0]).toEqual({
      path: "/edit",
      body: { image: [0.1, 0.2, 0.3, 0.4], edits: [[1, 2.5]] },
    });
    expect(resp.y_hat_edited[1]).toBe(2.5);
    expect(resp.image_out.length).toBe(4);
  });

  it("unpacks service error bodies", async () => {
    const fetchImpl = async () =>
      new Response(JSON.stringify({ error: "edits: values must be numbers", field: "edits" }), {
        status: 400,
      });
    const client = new EditingClient(BASE, fetchImpl);
    const err = await client.edit([1], []).catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(400);
    expect(err.field).toBe("edits");
    expect(err.message).toContain("values must be numbers");
  });

  it("falls back to the HTTP status when the body is not JSON", async () => {
    const fetchImpl = async () => new Response("boom", { status: 500 });
    const client = new EditingClient(BASE, fetchImpl);
    const err = await client.modelInfo().catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.message).toBe("HTTP 500");
    expect(err.field).toBeNull();
  });
});
