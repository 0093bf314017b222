import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { QueueController, choiceForKey } from '../src/queue.js';
import type { QueueItem } from '../src/types.js';

function makeItem(imageId: string, leaseSeconds = 600): QueueItem {
  return {
    queue: 's1:a',
    session_id: 's1',
    annotation_pass: 'a',
    image_id: imageId,
    attribute: 'MSO',
    guideline: 'lips apart counts as open',
    image_url: `/api/v1/projects/demo/images/${imageId}`,
    lease_seconds: leaseSeconds,
  };
}

interface Call {
  url: string;
  body: unknown;
}

function stubApi(items: Array<QueueItem | null>, opts: { failSubmits?: number } = {}) {
  const calls: Call[] = [];
  let failsLeft = opts.failSubmits ?? 0;
  const fetchImpl = (async (url: string, init?: RequestInit) => {
    if (url.includes('/annotations/next')) {
      const item = items.shift() ?? null;
      calls.push({ url, body: null });
      if (item === null) return new Response(null, { status: 204 });
      return Response.json(item);
    }
    const body = init?.body ? JSON.parse(init.body as string) : null;
    if (failsLeft > 0) {
      failsLeft -= 1;
      throw new TypeError('network down');
    }
    calls.push({ url, body });
    return Response.json({ ok: true });
  }) as unknown as typeof fetch;
  return { api: new ApiClient('', 'demo', fetchImpl), calls };
}

describe('keyboard mapping', () => {
  it('maps 1/2/3/4 to the four choices in display order', () => {
    expect(choiceForKey('1')).toBe('TRUE');
    expect(choiceForKey('2')).toBe('FALSE');
    expect(choiceForKey('3')).toBe('INFO_NOT_VISIBLE');
    expect(choiceForKey('4')).toBe('UNUSABLE');
    expect(choiceForKey('x')).toBeNull();
    expect(choiceForKey('5')).toBeNull();
  });
});

describe('QueueController', () => {
  it('loads items until the queue drains', async () => {
    const { api } = stubApi([makeItem('a.jpg'), makeItem('b.jpg'), null]);
    const ctl = new QueueController(api, 's1:a', 'alice');
    expect((await ctl.loadNext()).item?.image_id).toBe('a.jpg');
    expect((await ctl.loadNext()).item?.image_id).toBe('b.jpg');
    const drained = await ctl.loadNext();
    expect(drained.item).toBeNull();
    expect(drained.drained).toBe(true);
  });

  it('submits session labels with the choice token', async () => {
    const { api, calls } = stubApi([makeItem('a.jpg'), null]);
    const ctl = new QueueController(api, 's1:a', 'alice');
    await ctl.loadNext();
    await ctl.choose('INFO_NOT_VISIBLE');
    const submit = calls.find((c) => c.url.includes('/labels'));
    expect(submit?.body).toMatchObject({
      annotation_pass: 'a',
      image_id: 'a.jpg',
      value: 0,
      annotator: 'alice',
    });
  });

  it('routes UNUSABLE to the unusable endpoint', async () => {
    const { api, calls } = stubApi([makeItem('junk.jpg'), null]);
    const ctl = new QueueController(api, 's1:a', 'alice');
    await ctl.loadNext();
    await ctl.choose('UNUSABLE');
    const submit = calls.find((c) => c.url.includes('/annotations/unusable'));
    expect(submit?.body).toMatchObject({ image_id: 'junk.jpg', source: 'alice' });
  });

  it('disables submission after the lease expires', async () => {
    let clock = 0;
    const { api } = stubApi([makeItem('a.jpg', 10), null]);
    const ctl = new QueueController(api, 's1:a', 'alice', () => clock);
    await ctl.loadNext();
    expect(ctl.canSubmit()).toBe(true);
    clock += 11_000;
    expect(ctl.canSubmit()).toBe(false);
    const state = await ctl.choose('TRUE'); // expired: no submit, item returns
    expect(state.notice).toContain('lease expired');
  });

  it('buffers decisions while offline and retries them', async () => {
    const { api, calls } = stubApi([makeItem('a.jpg'), null], { failSubmits: 1 });
    const ctl = new QueueController(api, 's1:a', 'alice');
    await ctl.loadNext();
    const state = await ctl.choose('TRUE');
    expect(state.notice).toContain('buffered');
    expect(state.pendingRetries).toBe(1);
    expect(calls.some((c) => c.url.includes('/labels'))).toBe(false);

    const stuck = await ctl.retryPending(); // network is back
    expect(stuck).toBe(0);
    const submit = calls.find((c) => c.url.includes('/labels'));
    expect(submit?.body).toMatchObject({ image_id: 'a.jpg', value: 1 });
    expect(ctl.view.notice).toBeNull();
  });
});
